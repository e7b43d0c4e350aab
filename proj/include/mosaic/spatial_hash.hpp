// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Uniform spatial hash grid for 3D radius queries. Cell size equals the query
// radius, so any neighbor within the radius lives in one of the 27 cells
// around the query point.

#ifndef MOSAIC_SPATIAL_HASH_HPP
#define MOSAIC_SPATIAL_HASH_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"

namespace mosaic {

class SpatialHashGrid {
  public:
    SpatialHashGrid(std::span<const Vec3> points, double cell_size)
        : points_(points.begin(), points.end()), cell_(cell_size) {
        if (!(cell_size > 0.0)) throw InvalidParameter("SpatialHashGrid: cell_size must be > 0");
        buckets_.reserve(points_.size());
        for (std::size_t k = 0; k < points_.size(); ++k)
            buckets_[key(points_[k])].push_back(static_cast<int>(k));
    }

    /// True if any stored point lies within `radius` (inclusive) of q.
    /// Requires radius <= cell_size.
    bool has_neighbor_within(const Vec3& q, double radius) const {
        const double r2 = radius * radius;
        const std::int64_t cx = coord(q.x()), cy = coord(q.y()), cz = coord(q.z());
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it = buckets_.find(pack(cx + dx, cy + dy, cz + dz));
                    if (it == buckets_.end()) continue;
                    for (int idx : it->second)
                        if ((points_[idx] - q).squaredNorm() <= r2) return true;
                }
        return false;
    }

    /// Indices of all stored points within `radius` (inclusive) of q,
    /// ascending. Requires radius <= cell_size.
    std::vector<int> radius_search(const Vec3& q, double radius) const {
        const double r2 = radius * radius;
        std::vector<int> out;
        const std::int64_t cx = coord(q.x()), cy = coord(q.y()), cz = coord(q.z());
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it = buckets_.find(pack(cx + dx, cy + dy, cz + dz));
                    if (it == buckets_.end()) continue;
                    for (int idx : it->second)
                        if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
                }
        std::sort(out.begin(), out.end());
        return out;
    }

  private:
    std::int64_t coord(double x) const {
        return static_cast<std::int64_t>(std::floor(x / cell_));
    }
    std::uint64_t key(const Vec3& p) const {
        return pack(coord(p.x()), coord(p.y()), coord(p.z()));
    }
    static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
        // 3 x 21-bit signed lattice; plenty for desk-scale scenes.
        const std::uint64_t mask = (1ULL << 21) - 1;
        return ((std::uint64_t(x) & mask) << 42) | ((std::uint64_t(y) & mask) << 21) |
               (std::uint64_t(z) & mask);
    }

    std::vector<Vec3> points_;
    double cell_;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets_;
};

}  // namespace mosaic

#endif  // MOSAIC_SPATIAL_HASH_HPP
