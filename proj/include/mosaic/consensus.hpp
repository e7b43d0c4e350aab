// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Globally optimal robust translation re-estimation. Each correspondence
// proposes a candidate translation; the consensus optimum is the point
// covered by the most epsilon-balls around those candidates (maximum sphere
// overlap). Solved by a zooming sparse-grid branch-and-bound over axis-aligned
// cells, classifying each cell against each sphere as outside / boundary /
// fully-contained via exact closest-point and farthest-corner distances.

#ifndef MOSAIC_CONSENSUS_HPP
#define MOSAIC_CONSENSUS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/pose_graph.hpp"
#include "mosaic/thread_pool.hpp"

namespace mosaic {

/// Candidate translations with the inlier radius epsilon.
struct SphereSet {
    std::vector<Vec3> centers;
    double radius = 0.0;
};

struct ConsensusConfig {
    double initial_cell = 0.0;  // <= 0 means use the sphere radius
    int zoom_factor = 2;        // per-axis subdivision
    int max_zoom = 40;
};

struct ZoomLevelStats {
    int zoom_level = 0;
    std::int64_t cells = 0;
    int max_count = 0;
};

struct ConsensusResult {
    Vec3 translation = Vec3::Zero();  // least-squares refit: mean of inliers
    Vec3 certified_point = Vec3::Zero();  // a point strictly inside all inlier spheres
    std::vector<int> inlier_indices;
    int inlier_count = 0;
    int zoom_levels = 0;
    std::int64_t cells_visited = 0;
    bool converged = true;
    std::vector<ZoomLevelStats> level_stats;
};

/// One candidate translation per correspondence: t_hat = R_j X_j - R_i X_i.
inline std::vector<Vec3> candidate_translations(const CorrespondenceSet& corr,
                                                const Rotation& R_i, const Rotation& R_j) {
    if (corr.empty()) throw EmptyCorrespondences("candidate_translations: empty set");
    std::vector<Vec3> out;
    out.reserve(corr.size());
    for (std::size_t k = 0; k < corr.size(); ++k)
        out.push_back(R_j * corr.points_j[k] - R_i * corr.points_i[k]);
    return out;
}

namespace detail {

// Box-sphere relation from the two exact distances: outside when the closest
// point of the box is farther than the radius, contained when the farthest
// corner is strictly inside.
struct BoxSphere {
    double min_dist2 = 0.0;
    double max_dist2 = 0.0;
};

inline BoxSphere box_sphere_distances(const Vec3& lo, const Vec3& hi, const Vec3& c) {
    BoxSphere d;
    for (int a = 0; a < 3; ++a) {
        const double below = lo[a] - c[a];
        const double above = c[a] - hi[a];
        const double nearest = std::max({below, above, 0.0});
        d.min_dist2 += nearest * nearest;
        const double farthest = std::max(std::abs(below), std::abs(above));
        d.max_dist2 += farthest * farthest;
    }
    return d;
}

struct Cell {
    Vec3 lo;                   // min corner; extent is the level's cell size
    std::vector<int> spheres;  // candidate spheres not outside this cell
    int contained = 0;         // spheres fully containing this cell
};

inline std::uint64_t pack_index(std::int64_t x, std::int64_t y, std::int64_t z) {
    const std::uint64_t mask = (1ULL << 21) - 1;
    return ((std::uint64_t(x) & mask) << 42) | ((std::uint64_t(y) & mask) << 21) |
           (std::uint64_t(z) & mask);
}

}  // namespace detail

/// Maximum-consensus translation by zooming sparse-grid branch-and-bound.
///
/// A cell's sphere count (spheres it is not outside of) upper-bounds the
/// consensus achievable inside it; its fully-contained count is achieved by
/// every interior point. Cells whose upper bound cannot beat the best
/// certified lower bound are pruned; boundary-free cells are terminal. At
/// termination the best terminal cell holds the exact global optimum. Among
/// tied terminal cells the winner has the lowest refit residual, then the
/// lexicographically smallest cell center. If max_zoom is hit first, the best
/// candidate so far is returned with converged = false.
inline ConsensusResult max_consensus_translation(const SphereSet& candidates,
                                                 const ConsensusConfig& cfg = {}) {
    const double eps = candidates.radius;
    if (!(eps > 0.0)) throw InvalidParameter("max_consensus_translation: radius must be > 0");
    if (candidates.centers.empty())
        throw EmptyInput("max_consensus_translation: no candidates");
    if (cfg.zoom_factor < 2 || cfg.max_zoom < 1)
        throw InvalidParameter("max_consensus_translation: bad ConsensusConfig");
    const std::vector<Vec3>& centers = candidates.centers;
    const int n = static_cast<int>(centers.size());
    const double eps2 = eps * eps;

    // Search domain: AABB of the centers inflated by eps. The grid origin is
    // perturbed by 1e-7*eps against sphere boundaries exactly on cell faces.
    Vec3 aabb_lo = centers[0], aabb_hi = centers[0];
    for (const Vec3& c : centers) {
        aabb_lo = aabb_lo.cwiseMin(c);
        aabb_hi = aabb_hi.cwiseMax(c);
    }
    const Vec3 origin = aabb_lo - Vec3::Constant(eps * (1.0 + 1e-7));
    double cell_size = cfg.initial_cell > 0.0 ? cfg.initial_cell : eps;

    // Level 0: register every sphere into the cells its bounding box touches,
    // keeping only non-outside relations.
    std::vector<detail::Cell> cells;
    {
        std::unordered_map<std::uint64_t, int> index;
        for (int k = 0; k < n; ++k) {
            const Vec3& c = centers[k];
            std::int64_t lo_idx[3], hi_idx[3];
            for (int a = 0; a < 3; ++a) {
                lo_idx[a] = static_cast<std::int64_t>(
                    std::floor((c[a] - eps - origin[a]) / cell_size));
                hi_idx[a] = static_cast<std::int64_t>(
                    std::floor((c[a] + eps - origin[a]) / cell_size));
            }
            for (std::int64_t ix = lo_idx[0]; ix <= hi_idx[0]; ++ix)
                for (std::int64_t iy = lo_idx[1]; iy <= hi_idx[1]; ++iy)
                    for (std::int64_t iz = lo_idx[2]; iz <= hi_idx[2]; ++iz) {
                        const Vec3 lo = origin + cell_size * Vec3(double(ix), double(iy),
                                                                  double(iz));
                        const Vec3 hi = lo + Vec3::Constant(cell_size);
                        const auto d = detail::box_sphere_distances(lo, hi, c);
                        if (d.min_dist2 > eps2) continue;  // outside
                        const std::uint64_t key = detail::pack_index(ix, iy, iz);
                        auto [it, fresh] = index.try_emplace(key, int(cells.size()));
                        if (fresh) cells.push_back({lo, {}, 0});
                        detail::Cell& cell = cells[it->second];
                        cell.spheres.push_back(k);
                        if (d.max_dist2 < eps2) ++cell.contained;
                    }
        }
    }

    ConsensusResult result;
    int best_lb = 0;
    bool have_champion = false;
    int champion_count = -1;
    double champion_residual = std::numeric_limits<double>::infinity();
    Vec3 champion_center = Vec3::Zero();
    std::vector<int> champion_inliers;

    // Fallback candidate when max_zoom stops the search early: the best
    // lower-bound cell seen anywhere.
    int fallback_lb = -1;
    Vec3 fallback_center = Vec3::Zero();
    std::vector<int> fallback_inliers;

    auto contained_of = [&](const detail::Cell& cell, double size) {
        std::vector<int> inliers;
        const Vec3 hi = cell.lo + Vec3::Constant(size);
        for (int k : cell.spheres)
            if (detail::box_sphere_distances(cell.lo, hi, centers[k]).max_dist2 < eps2)
                inliers.push_back(k);
        return inliers;
    };

    auto refit_residual = [&](const std::vector<int>& inliers) {
        Vec3 mean = Vec3::Zero();
        for (int k : inliers) mean += centers[k];
        mean /= double(inliers.size());
        double r = 0.0;
        for (int k : inliers) r += (centers[k] - mean).squaredNorm();
        return r;
    };

    auto lex_less = [](const Vec3& a, const Vec3& b) {
        if (a.x() != b.x()) return a.x() < b.x();
        if (a.y() != b.y()) return a.y() < b.y();
        return a.z() < b.z();
    };

    for (int level = 0; level <= cfg.max_zoom; ++level) {
        result.zoom_levels = level;
        result.cells_visited += static_cast<std::int64_t>(cells.size());

        int level_max_ub = 0;
        for (const detail::Cell& cell : cells) {
            level_max_ub = std::max(level_max_ub, int(cell.spheres.size()));
            best_lb = std::max(best_lb, cell.contained);
            if (cell.contained > fallback_lb) {
                fallback_lb = cell.contained;
                fallback_center = cell.lo + Vec3::Constant(0.5 * cell_size);
                fallback_inliers = contained_of(cell, cell_size);
            }
        }
        result.level_stats.push_back({level, std::int64_t(cells.size()), level_max_ub});

        // Terminal cells (boundary-free: every registered sphere contains
        // them) compete for the championship.
        for (const detail::Cell& cell : cells) {
            if (cell.contained != int(cell.spheres.size())) continue;
            const int count = cell.contained;
            if (count < champion_count || count < best_lb) continue;
            const Vec3 center = cell.lo + Vec3::Constant(0.5 * cell_size);
            double residual = -1.0;
            if (count > champion_count) {
                residual = refit_residual(cell.spheres);
            } else {  // count == champion_count: residual then lexicographic
                residual = refit_residual(cell.spheres);
                if (residual > champion_residual) continue;
                if (residual == champion_residual && !lex_less(center, champion_center))
                    continue;
            }
            have_champion = true;
            champion_count = count;
            champion_residual = residual;
            champion_center = center;
            champion_inliers = cell.spheres;
        }

        // Prune. Cells that cannot strictly beat the certified best are
        // dropped once a terminal champion realizes that bound.
        const bool champion_up_to_date = have_champion && champion_count >= best_lb;
        std::vector<const detail::Cell*> kept;
        for (const detail::Cell& cell : cells) {
            const int ub = int(cell.spheres.size());
            if (cell.contained == ub) continue;  // terminal
            if (ub < best_lb) continue;
            if (ub == best_lb && champion_up_to_date) continue;
            kept.push_back(&cell);
        }
        if (kept.empty()) {
            result.converged = true;
            break;
        }
        if (level == cfg.max_zoom) {
            result.converged = false;
            break;
        }

        // Zoom: re-initialize a uniform grid on the kept cells, each child
        // classified against its parent's sphere list only.
        const double child_size = cell_size / cfg.zoom_factor;
        std::vector<detail::Cell> next;
        next.reserve(kept.size() * cfg.zoom_factor);
        for (const detail::Cell* parent : kept) {
            for (int ix = 0; ix < cfg.zoom_factor; ++ix)
                for (int iy = 0; iy < cfg.zoom_factor; ++iy)
                    for (int iz = 0; iz < cfg.zoom_factor; ++iz) {
                        const Vec3 lo = parent->lo + child_size * Vec3(double(ix), double(iy),
                                                                       double(iz));
                        const Vec3 hi = lo + Vec3::Constant(child_size);
                        detail::Cell child{lo, {}, 0};
                        for (int k : parent->spheres) {
                            const auto d =
                                detail::box_sphere_distances(lo, hi, centers[k]);
                            if (d.min_dist2 > eps2) continue;
                            child.spheres.push_back(k);
                            if (d.max_dist2 < eps2) ++child.contained;
                        }
                        if (!child.spheres.empty()) next.push_back(std::move(child));
                    }
        }
        cells = std::move(next);
        cell_size = child_size;
    }

    if (!have_champion || (!result.converged && fallback_lb > champion_count)) {
        // Early stop before any terminal cell appeared: report the best
        // certified cell.
        champion_count = std::max(fallback_lb, 0);
        champion_center = fallback_center;
        champion_inliers = fallback_inliers;
    }

    result.inlier_indices = champion_inliers;
    result.inlier_count = champion_count;
    result.certified_point = champion_center;

    // Least-squares refit for a pure-translation model = mean of the inlier
    // centers. The certified point (winning cell center) lies strictly inside
    // every inlier sphere; the mean can drift outside an extreme member's
    // sphere when the consensus optimum sits on a sliver, but it is the
    // accurate estimator.
    if (!champion_inliers.empty()) {
        Vec3 mean = Vec3::Zero();
        for (int k : champion_inliers) mean += centers[k];
        result.translation = mean / double(champion_inliers.size());
    } else {
        result.translation = champion_center;
    }
    return result;
}

/// Exhaustive per-candidate baseline: score every candidate center by the
/// number of centers within eps of it, take the best (ties by lowest index),
/// and refit as the mean over its inliers. O(n^2) by construction.
inline ConsensusResult exhaustive_candidate_oracle(const SphereSet& candidates) {
    const double eps = candidates.radius;
    if (!(eps > 0.0)) throw InvalidParameter("exhaustive_candidate_oracle: radius must be > 0");
    if (candidates.centers.empty())
        throw EmptyInput("exhaustive_candidate_oracle: no candidates");
    const std::vector<Vec3>& centers = candidates.centers;
    const int n = static_cast<int>(centers.size());
    const double eps2 = eps * eps;

    int best = 0, best_count = -1;
    for (int i = 0; i < n; ++i) {
        int count = 0;
        for (int j = 0; j < n; ++j)
            if ((centers[j] - centers[i]).squaredNorm() < eps2) ++count;
        if (count > best_count) {
            best_count = count;
            best = i;
        }
    }

    ConsensusResult result;
    for (int j = 0; j < n; ++j)
        if ((centers[j] - centers[best]).squaredNorm() < eps2)
            result.inlier_indices.push_back(j);
    result.inlier_count = best_count;
    Vec3 mean = Vec3::Zero();
    for (int k : result.inlier_indices) mean += centers[k];
    result.translation = mean / double(result.inlier_indices.size());
    return result;
}

struct ReestimateResult {
    PoseGraph graph;
    std::vector<std::uint8_t> edge_converged;
    bool all_converged = true;
};

/// Re-estimates every edge's relative translation by maximum consensus over
/// its per-correspondence candidates, given the averaged global rotations.
/// Edge rotations are replaced by the relative rotation the global estimates
/// imply, and inlier counts / weights are refreshed from the consensus
/// inliers. Edges are independent and solved as a parallel map; results are
/// bit-identical for any thread count. Per-edge non-termination is reported
/// as a flag, never an error.
inline ReestimateResult reestimate_all_edges(const PoseGraph& graph,
                                             const std::vector<Rotation>& rotations,
                                             double eps, const ConsensusConfig& cfg = {},
                                             int n_threads = 1) {
    if (rotations.size() != graph.vertices.size())
        throw LengthMismatch("reestimate_all_edges: rotations/vertices mismatch");
    if (!(eps > 0.0)) throw InvalidParameter("reestimate_all_edges: eps must be > 0");

    ReestimateResult out;
    out.graph = graph;
    out.edge_converged.assign(graph.edges.size(), 1);

    parallel_for(n_threads, out.graph.edges.size(), [&](std::size_t k) {
        Edge& e = out.graph.edges[k];
        const Rotation& Ri = rotations[e.i];
        const Rotation& Rj = rotations[e.j];
        if (!e.correspondences.empty()) {
            SphereSet spheres{candidate_translations(e.correspondences, Ri, Rj), eps};
            const ConsensusResult consensus = max_consensus_translation(spheres, cfg);
            // The consensus estimates d = t_i - t_j; the stored edge
            // translation is R_i^T (t_j - t_i) = -R_i^T d.
            e.relative.t = -(Ri.transpose() * consensus.translation);
            e.inlier_count = consensus.inlier_count;
            out.edge_converged[k] = consensus.converged ? 1 : 0;
        }
        e.relative.R = Ri.transpose() * Rj;
    });

    int max_count = 0;
    for (const Edge& e : out.graph.edges) max_count = std::max(max_count, e.inlier_count);
    for (std::size_t k = 0; k < out.graph.edges.size(); ++k) {
        out.graph.edges[k].weight = std::max(
            max_count > 0 ? double(out.graph.edges[k].inlier_count) / max_count : 0.0, 1e-3);
        out.all_converged = out.all_converged && out.edge_converged[k] != 0;
    }
    return out;
}

}  // namespace mosaic

#endif  // MOSAIC_CONSENSUS_HPP
