// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded RNG with hand-rolled distributions. std::uniform_real_distribution
// and friends are implementation-defined, which would break the byte-identical
// reproducibility contract across standard libraries.

#ifndef MOSAIC_RANDOM_HPP
#define MOSAIC_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "mosaic/geometry.hpp"

namespace mosaic {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1).
    double uniform() {
        // 53 random mantissa bits.
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % n;
    }

    /// Standard normal via Box-Muller (no cached spare; deterministic call order).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Vec3 normal_vec3(double sigma = 1.0) {
        const double x = normal(), y = normal(), z = normal();
        return sigma * Vec3(x, y, z);
    }

    Vec3 uniform_in_box(const Vec3& lo, const Vec3& hi) {
        const double x = uniform(lo.x(), hi.x());
        const double y = uniform(lo.y(), hi.y());
        const double z = uniform(lo.z(), hi.z());
        return {x, y, z};
    }

    /// Uniform direction on the unit sphere.
    Vec3 unit_vec3() {
        Vec3 v;
        double n2;
        do {
            v = normal_vec3();
            n2 = v.squaredNorm();
        } while (n2 < 1e-12);
        return v / std::sqrt(n2);
    }

    /// Random rotation with geodesic angle <= max_angle (uniform axis,
    /// uniform angle). max_angle = pi gives a usable "arbitrary" rotation.
    Rotation rotation(double max_angle = M_PI) {
        return exp_so3(uniform(0.0, max_angle) * unit_vec3());
    }

    std::uint64_t raw() { return engine_(); }

    /// Derive an independent child stream; stable regardless of how much the
    /// parent has been consumed afterwards.
    Rng fork(std::uint64_t salt) {
        return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0xd1b54a32d192ed03ULL));
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace mosaic

#endif  // MOSAIC_RANDOM_HPP
