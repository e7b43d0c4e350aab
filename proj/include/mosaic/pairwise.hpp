// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Classical pairwise front-end: synthetic scene generation, RANSAC + SVD
// rigid estimation from correspondences, and overlap scoring.

#ifndef MOSAIC_PAIRWISE_HPP
#define MOSAIC_PAIRWISE_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/pose_graph.hpp"
#include "mosaic/random.hpp"
#include "mosaic/spatial_hash.hpp"

namespace mosaic {

struct RansacConfig {
    int max_iterations = 512;
    double inlier_threshold = 0.03;  // meters
    double confidence = 0.999;
    int min_sample = 3;
    std::uint64_t rng_seed = 0;
};

struct OverlapConfig {
    enum class Sense { kPToQ, kQToP, kSymmetric };
    double radius = 0.05;  // meters
    Sense sense = Sense::kSymmetric;
};

struct PairwiseEstimate {
    RigidTransform transform;  // frame-i -> frame-j point map
    std::vector<int> inlier_indices;
    // Iterations that would reach cfg.confidence given the observed inlier
    // ratio; reported for logs only, never used for early exit.
    int sufficient_iterations = 0;
};

/// RANSAC over minimal 3-point samples, scored by ||R X_i + t - X_j|| <
/// inlier_threshold, refit with fit_rigid_svd over the winning inliers.
/// Runs exactly cfg.max_iterations samples so results are deterministic per
/// seed. Returned inliers are the winning model's scoring inliers.
inline PairwiseEstimate estimate_pairwise(const CorrespondenceSet& corr,
                                          const RansacConfig& cfg) {
    const int n = static_cast<int>(corr.size());
    if (n < cfg.min_sample)
        throw TooFewCorrespondences("estimate_pairwise: need at least " +
                                    std::to_string(cfg.min_sample) + " correspondences");
    if (cfg.max_iterations < 1 || !(cfg.inlier_threshold > 0.0))
        throw InvalidParameter("estimate_pairwise: bad RansacConfig");

    Rng rng(cfg.rng_seed);
    const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;

    std::optional<RigidTransform> best_model;
    int best_count = -1;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        int a = static_cast<int>(rng.index(n));
        int b = static_cast<int>(rng.index(n));
        int c = static_cast<int>(rng.index(n));
        if (a == b || a == c || b == c) continue;

        const Vec3 src[3] = {corr.points_i[a], corr.points_i[b], corr.points_i[c]};
        const Vec3 dst[3] = {corr.points_j[a], corr.points_j[b], corr.points_j[c]};
        RigidTransform model;
        try {
            model = fit_rigid_svd(src, dst);
        } catch (const DegenerateGeometry&) {
            continue;
        }

        int count = 0;
        for (int k = 0; k < n; ++k)
            if ((model.R * corr.points_i[k] + model.t - corr.points_j[k]).squaredNorm() < thr2)
                ++count;
        if (count > best_count) {
            best_count = count;
            best_model = model;
        }
    }
    if (!best_model)
        throw DegenerateGeometry("estimate_pairwise: no non-degenerate sample found");

    PairwiseEstimate out;
    for (int k = 0; k < n; ++k)
        if ((best_model->R * corr.points_i[k] + best_model->t - corr.points_j[k])
                .squaredNorm() < thr2)
            out.inlier_indices.push_back(k);

    out.transform = *best_model;
    if (out.inlier_indices.size() >= 3) {
        std::vector<Vec3> src, dst;
        src.reserve(out.inlier_indices.size());
        dst.reserve(out.inlier_indices.size());
        for (int k : out.inlier_indices) {
            src.push_back(corr.points_i[k]);
            dst.push_back(corr.points_j[k]);
        }
        try {
            out.transform = fit_rigid_svd(src, dst);
        } catch (const DegenerateGeometry&) {
            // keep the minimal-sample model
        }
    }

    const double w = std::max(1e-9, double(std::max(best_count, 0)) / n);
    const double denom = std::log(std::max(1e-300, 1.0 - w * w * w));
    out.sufficient_iterations =
        denom < 0.0 ? static_cast<int>(std::ceil(std::log(1.0 - cfg.confidence) / denom))
                    : cfg.max_iterations;
    return out;
}

/// Fraction of points in the transformed query cloud with a neighbor in the
/// other cloud within cfg.radius, using a spatial hash grid with cell size =
/// radius. The symmetric sense averages P->Q and Q->P.
inline double overlap_score(const std::vector<Vec3>& cloud_p, const std::vector<Vec3>& cloud_q,
                            const RigidTransform& p_to_q, const OverlapConfig& cfg) {
    if (cloud_p.empty() || cloud_q.empty())
        throw EmptyInput("overlap_score: empty cloud");
    if (!(cfg.radius > 0.0)) throw InvalidParameter("overlap_score: radius must be > 0");

    auto one_way = [&](const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                       const RigidTransform& T) {
        SpatialHashGrid grid(to, cfg.radius);
        std::size_t hits = 0;
        for (const Vec3& p : from)
            if (grid.has_neighbor_within(T(p), cfg.radius)) ++hits;
        return double(hits) / double(from.size());
    };

    switch (cfg.sense) {
        case OverlapConfig::Sense::kPToQ:
            return one_way(cloud_p, cloud_q, p_to_q);
        case OverlapConfig::Sense::kQToP:
            return one_way(cloud_q, cloud_p, inverse(p_to_q));
        case OverlapConfig::Sense::kSymmetric:
        default:
            return 0.5 * (one_way(cloud_p, cloud_q, p_to_q) +
                          one_way(cloud_q, cloud_p, inverse(p_to_q)));
    }
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

struct SceneConfig {
    int n_clouds = 10;
    int points_per_cloud = 500;
    double overlap_fraction = 0.7;  // window overlap between consecutive views
    double noise_sigma = 0.0;       // meters, on correspondences and clouds
    double outlier_ratio = 0.0;     // fraction of uniform-mismatch pairs
    std::uint64_t rng_seed = 0;

    int correspondences_per_pair = 200;
    int neighbor_span = 2;  // correspondences for all pairs with |i-j| <= span
    double scene_extent = 2.0;
    double window_size = 1.0;
};

/// Point clouds + ground-truth poses + the generated pose graph (truth
/// relatives, noisy/outlier correspondences with truth labels).
struct SceneBundle {
    std::vector<std::vector<Vec3>> clouds;    // frame-local points
    std::vector<RigidTransform> truth_poses;  // frame -> world
    PoseGraph graph;
};

namespace detail {

// Latent surface: axis-aligned rectangles (walls/floor spanning the scene
// plus random box faces), sampled proportionally to area.
struct LatentSurface {
    struct Rect {
        Vec3 origin;
        Vec3 u;  // first edge vector
        Vec3 v;  // second edge vector
        double area;
    };
    std::vector<Rect> rects;
    double total_area = 0.0;

    void add(const Vec3& origin, const Vec3& u, const Vec3& v) {
        const double area = u.cross(v).norm();
        if (area <= 0.0) return;
        rects.push_back({origin, u, v, area});
        total_area += area;
    }

    Vec3 sample(Rng& rng) const {
        double pick = rng.uniform() * total_area;
        std::size_t idx = 0;
        for (; idx + 1 < rects.size(); ++idx) {
            if (pick < rects[idx].area) break;
            pick -= rects[idx].area;
        }
        const Rect& r = rects[idx];
        return r.origin + rng.uniform() * r.u + rng.uniform() * r.v;
    }
};

inline LatentSurface make_surface(Rng& rng, double extent) {
    LatentSurface s;
    const double e = extent;
    // Floor and two walls cover every view window.
    s.add({0, 0, 0}, {e, 0, 0}, {0, e, 0});
    s.add({0, 0, 0}, {e, 0, 0}, {0, 0, e});
    s.add({0, 0, 0}, {0, e, 0}, {0, 0, e});
    // A few random boxes for 3D structure.
    for (int b = 0; b < 4; ++b) {
        const Vec3 lo = rng.uniform_in_box(Vec3(0.1 * e, 0.1 * e, 0.0),
                                           Vec3(0.7 * e, 0.7 * e, 0.3 * e));
        const Vec3 size(rng.uniform(0.1 * e, 0.3 * e), rng.uniform(0.1 * e, 0.3 * e),
                        rng.uniform(0.1 * e, 0.3 * e));
        const Vec3 dx(size.x(), 0, 0), dy(0, size.y(), 0), dz(0, 0, size.z());
        s.add(lo, dx, dy);
        s.add(lo + dz, dx, dy);
        s.add(lo, dx, dz);
        s.add(lo + dy, dx, dz);
        s.add(lo, dy, dz);
        s.add(lo + dx, dy, dz);
    }
    return s;
}

inline bool in_window(const Vec3& w, const Vec3& center, double half) {
    return (w - center).cwiseAbs().maxCoeff() <= half;
}

/// Rejection-sample a surface point inside the given window; widens the
/// window if the surface is locally sparse.
inline Vec3 sample_in_window(Rng& rng, const LatentSurface& surface, const Vec3& center,
                             double half) {
    for (double h = half;; h *= 1.5) {
        for (int tries = 0; tries < 256; ++tries) {
            const Vec3 w = surface.sample(rng);
            if (in_window(w, center, h)) return w;
        }
    }
}

}  // namespace detail

inline SceneBundle generate_scene(const SceneConfig& cfg) {
    if (cfg.n_clouds < 2) throw InvalidParameter("generate_scene: n_clouds must be >= 2");
    if (!(cfg.overlap_fraction > 0.0) || cfg.overlap_fraction > 1.0)
        throw InvalidParameter("generate_scene: overlap_fraction must be in (0,1]");
    if (cfg.outlier_ratio < 0.0 || cfg.outlier_ratio >= 1.0)
        throw InvalidParameter("generate_scene: outlier_ratio must be in [0,1)");
    if (cfg.noise_sigma < 0.0) throw InvalidParameter("generate_scene: negative noise_sigma");
    if (cfg.points_per_cloud < 1 || cfg.correspondences_per_pair < 1)
        throw InvalidParameter("generate_scene: counts must be positive");

    Rng rng(cfg.rng_seed);
    const detail::LatentSurface surface = detail::make_surface(rng, cfg.scene_extent);

    // View windows sweep across the scene; consecutive windows share
    // overlap_fraction of their extent.
    const double half = 0.5 * cfg.window_size;
    const double step = cfg.window_size * (1.0 - cfg.overlap_fraction);
    std::vector<Vec3> window_centers(cfg.n_clouds);
    const Vec3 w0(half, 0.5 * cfg.scene_extent, 0.4 * cfg.scene_extent);
    for (int i = 0; i < cfg.n_clouds; ++i) {
        const double along = step * i;
        window_centers[i] =
            w0 + Vec3(along, 0.15 * cfg.scene_extent * std::sin(0.9 * i), 0.0);
    }

    // Smooth trajectory of ground-truth poses; vertex 0 is the identity.
    SceneBundle bundle;
    bundle.truth_poses.resize(cfg.n_clouds);
    bundle.truth_poses[0] = RigidTransform::identity();
    for (int i = 1; i < cfg.n_clouds; ++i) {
        const Vec3 axis = rng.unit_vec3();
        const double angle = rng.uniform(0.1, 0.35);
        const Rotation dR = exp_so3(angle * axis);
        const Vec3 dt = window_centers[i] - window_centers[i - 1] + rng.normal_vec3(0.03);
        bundle.truth_poses[i] = {bundle.truth_poses[i - 1].R * dR,
                                 bundle.truth_poses[i - 1].t + dt};
    }

    bundle.clouds.resize(cfg.n_clouds);
    for (int i = 0; i < cfg.n_clouds; ++i) {
        const RigidTransform to_local = inverse(bundle.truth_poses[i]);
        bundle.clouds[i].reserve(cfg.points_per_cloud);
        for (int k = 0; k < cfg.points_per_cloud; ++k) {
            const Vec3 w = detail::sample_in_window(rng, surface, window_centers[i], half);
            bundle.clouds[i].push_back(to_local(w) + rng.normal_vec3(cfg.noise_sigma));
        }
    }

    bundle.graph.vertices.resize(cfg.n_clouds);
    for (int i = 0; i < cfg.n_clouds; ++i) {
        bundle.graph.vertices[i].id = i;
        bundle.graph.vertices[i].pose = bundle.truth_poses[i];
        bundle.graph.vertices[i].fixed = (i == 0);
    }

    for (int i = 0; i < cfg.n_clouds; ++i) {
        for (int j = i + 1; j <= std::min(i + cfg.neighbor_span, cfg.n_clouds - 1); ++j) {
            Edge e;
            e.i = i;
            e.j = j;
            e.relative = relative_from_global(bundle.truth_poses[i], bundle.truth_poses[j]);
            const Vec3 mid = 0.5 * (window_centers[i] + window_centers[j]);
            const double span_half =
                std::max(half - 0.5 * (window_centers[j] - window_centers[i]).norm(),
                         0.25 * half);
            const RigidTransform to_i = inverse(bundle.truth_poses[i]);
            const RigidTransform to_j = inverse(bundle.truth_poses[j]);
            for (int k = 0; k < cfg.correspondences_per_pair; ++k) {
                if (rng.uniform() < cfg.outlier_ratio) {
                    // Uniform mismatch: unrelated surface points in each frame.
                    const Vec3 wi =
                        detail::sample_in_window(rng, surface, window_centers[i], half);
                    const Vec3 wj =
                        detail::sample_in_window(rng, surface, window_centers[j], half);
                    e.correspondences.add(to_i(wi), to_j(wj), false);
                } else {
                    const Vec3 w = detail::sample_in_window(rng, surface, mid, span_half);
                    e.correspondences.add(to_i(w),
                                          to_j(w) + rng.normal_vec3(cfg.noise_sigma), true);
                }
            }
            for (std::uint8_t label : e.correspondences.truth_labels)
                e.inlier_count += label;
            e.weight = 1.0;
            bundle.graph.edges.push_back(std::move(e));
        }
    }
    return bundle;
}

inline SceneBundle generate_scene(int n_clouds, int points_per_cloud, double overlap_fraction,
                                  double noise_sigma, double outlier_ratio,
                                  std::uint64_t rng_seed) {
    SceneConfig cfg;
    cfg.n_clouds = n_clouds;
    cfg.points_per_cloud = points_per_cloud;
    cfg.overlap_fraction = overlap_fraction;
    cfg.noise_sigma = noise_sigma;
    cfg.outlier_ratio = outlier_ratio;
    cfg.rng_seed = rng_seed;
    return generate_scene(cfg);
}

}  // namespace mosaic

#endif  // MOSAIC_PAIRWISE_HPP
