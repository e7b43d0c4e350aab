// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Full registration pipeline: pairwise front-end -> pose graph -> rotation
// averaging -> consensus translation re-estimation -> position averaging ->
// joint refinement -> metrics. Stage toggles drive the ablation harness.

#ifndef MOSAIC_PIPELINE_HPP
#define MOSAIC_PIPELINE_HPP

#include <chrono>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mosaic/consensus.hpp"
#include "mosaic/graph_io.hpp"
#include "mosaic/joint_refinement.hpp"
#include "mosaic/metrics.hpp"
#include "mosaic/pairwise.hpp"
#include "mosaic/pose_graph.hpp"
#include "mosaic/position_averaging.hpp"
#include "mosaic/rotation_averaging.hpp"
#include "mosaic/thread_pool.hpp"

namespace mosaic {

struct StageToggles {
    bool rotation_averaging = true;      // R
    bool consensus_reestimation = true;  // TR
    bool position_averaging = true;      // TA
    bool refinement = true;              // D stand-in
};

struct PipelineConfig {
    double eps = 0.03;  // shared inlier radius; seeds the per-stage defaults
    std::uint64_t seed = 0;
    int threads = 1;
    bool use_edge_weights = true;
    StageToggles stages;

    SceneConfig scene;
    double corrupt_edge_fraction = 0.0;  // benchmark knob: all-outlier edges

    RansacConfig ransac;
    OverlapConfig overlap;
    RotAvgConfig rot_avg;
    ConsensusConfig consensus;
    PosAvgConfig pos_avg;
    RefineConfig refine;
    MetricsConfig metrics;

    /// Re-derives the eps-tied knobs: RANSAC threshold = eps, overlap radius
    /// = eps, soft-L1 scale s = eps, truncation c = 3 eps, gamma = 3 eps.
    void apply_eps(double new_eps) {
        eps = new_eps;
        ransac.inlier_threshold = eps;
        overlap.radius = eps;
        pos_avg.loss_scale = eps;
        pos_avg.truncation = 3.0 * eps;
        refine.gamma = 3.0 * eps;
    }
};

inline PipelineConfig make_pipeline_config(double eps = 0.03, std::uint64_t seed = 0) {
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.scene.rng_seed = seed;
    cfg.apply_eps(eps);
    return cfg;
}

/// Effective configuration as "key = value" lines, echoed into every output
/// for provenance.
inline std::vector<std::string> config_echo(const PipelineConfig& c) {
    auto fmt = [](const std::string& k, double v) { return k + " = " + format_double(v); };
    auto fmi = [](const std::string& k, long long v) { return k + " = " + std::to_string(v); };
    // The thread count is deliberately not echoed: results are bit-identical
    // for any value, so it is not part of the reproducibility state.
    std::vector<std::string> lines;
    lines.push_back(fmt("eps", c.eps));
    lines.push_back(fmi("seed", (long long)c.seed));
    lines.push_back(fmi("use_edge_weights", c.use_edge_weights));
    lines.push_back(fmi("stage_rotation_averaging", c.stages.rotation_averaging));
    lines.push_back(fmi("stage_consensus", c.stages.consensus_reestimation));
    lines.push_back(fmi("stage_position_averaging", c.stages.position_averaging));
    lines.push_back(fmi("stage_refinement", c.stages.refinement));
    lines.push_back(fmi("scene_n_clouds", c.scene.n_clouds));
    lines.push_back(fmi("scene_points_per_cloud", c.scene.points_per_cloud));
    lines.push_back(fmt("scene_overlap_fraction", c.scene.overlap_fraction));
    lines.push_back(fmt("scene_noise_sigma", c.scene.noise_sigma));
    lines.push_back(fmt("scene_outlier_ratio", c.scene.outlier_ratio));
    lines.push_back(fmt("corrupt_edge_fraction", c.corrupt_edge_fraction));
    lines.push_back(fmi("ransac_max_iterations", c.ransac.max_iterations));
    lines.push_back(fmt("ransac_inlier_threshold", c.ransac.inlier_threshold));
    lines.push_back(fmt("ransac_confidence", c.ransac.confidence));
    lines.push_back(fmt("overlap_radius", c.overlap.radius));
    lines.push_back(fmi("rot_l1_max_iters", c.rot_avg.l1_max_iters));
    lines.push_back(fmi("rot_irls_max_iters", c.rot_avg.irls_max_iters));
    lines.push_back(fmt("rot_step_tolerance", c.rot_avg.step_tolerance));
    lines.push_back(fmt("rot_irls_kernel_width", c.rot_avg.irls_kernel_width));
    lines.push_back(fmt("consensus_initial_cell", c.consensus.initial_cell));
    lines.push_back(fmi("consensus_zoom_factor", c.consensus.zoom_factor));
    lines.push_back(fmi("consensus_max_zoom", c.consensus.max_zoom));
    lines.push_back(fmt("pos_loss_scale", c.pos_avg.loss_scale));
    lines.push_back(fmt("pos_truncation", c.pos_avg.truncation));
    lines.push_back(fmi("pos_max_iters", c.pos_avg.max_iters));
    lines.push_back(fmt("refine_gamma", c.refine.gamma));
    lines.push_back(fmi("refine_max_iters", c.refine.max_iters));
    lines.push_back(fmt("metrics_rre_threshold_deg", c.metrics.rre_success_threshold_deg));
    lines.push_back(fmt("metrics_rte_threshold_m", c.metrics.rte_success_threshold));
    return lines;
}

struct PipelineRun {
    PoseGraph final_graph;  // vertices carry the final poses
    std::vector<RigidTransform> final_poses;
    std::optional<EvalReport> report;  // present when ground truth is known
    std::vector<StageTime> timings;
    bool rotation_converged = true;
    bool positions_converged = true;
    bool refinement_converged = true;
    bool consensus_converged = true;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class StageTimer {
  public:
    explicit StageTimer(std::vector<StageTime>& sink) : sink_(sink) {}
    template <typename F>
    auto time(const std::string& name, F&& fn) {
        const auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            sink_.push_back({name, elapsed(start)});
        } else {
            auto out = fn();
            sink_.push_back({name, elapsed(start)});
            return out;
        }
    }

  private:
    static double elapsed(std::chrono::steady_clock::time_point start) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    std::vector<StageTime>& sink_;
};

/// Replaces the correspondences of a deterministic fraction of edges with
/// uniform mismatches (the fully-corrupted-edge benchmark condition).
inline void corrupt_edges(PoseGraph& graph, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || graph.edges.empty()) return;
    const int n_corrupt =
        std::min<int>(static_cast<int>(graph.edges.size()),
                      static_cast<int>(std::floor(fraction * graph.edges.size() + 0.5)));
    Rng rng(mix_seed(seed, 0xC0441ULL));
    std::vector<int> order(graph.edges.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    for (std::size_t k = order.size(); k > 1; --k)
        std::swap(order[k - 1], order[rng.index(k)]);
    for (int c = 0; c < n_corrupt; ++c) {
        Edge& e = graph.edges[order[c]];
        Vec3 lo_i = Vec3::Constant(1e30), hi_i = Vec3::Constant(-1e30);
        Vec3 lo_j = lo_i, hi_j = hi_i;
        for (std::size_t k = 0; k < e.correspondences.size(); ++k) {
            lo_i = lo_i.cwiseMin(e.correspondences.points_i[k]);
            hi_i = hi_i.cwiseMax(e.correspondences.points_i[k]);
            lo_j = lo_j.cwiseMin(e.correspondences.points_j[k]);
            hi_j = hi_j.cwiseMax(e.correspondences.points_j[k]);
        }
        for (std::size_t k = 0; k < e.correspondences.size(); ++k) {
            e.correspondences.points_i[k] = rng.uniform_in_box(lo_i, hi_i);
            e.correspondences.points_j[k] = rng.uniform_in_box(lo_j, hi_j);
            if (!e.correspondences.truth_labels.empty()) e.correspondences.truth_labels[k] = 0;
        }
        e.inlier_count = 0;
    }
}

}  // namespace detail

/// Pairwise front-end over a scene graph's correspondence sets: RANSAC + SVD
/// per edge (parallel map, per-edge seeds are pure functions of the run seed)
/// plus overlap scoring against the clouds.
inline std::vector<PairwiseResult> run_pairwise_frontend(const SceneBundle& bundle,
                                                         const PipelineConfig& cfg) {
    std::vector<PairwiseResult> results(bundle.graph.edges.size());
    parallel_for(cfg.threads, bundle.graph.edges.size(), [&](std::size_t k) {
        const Edge& e = bundle.graph.edges[k];
        RansacConfig rc = cfg.ransac;
        rc.rng_seed = detail::mix_seed(cfg.seed, k);
        const PairwiseEstimate est = estimate_pairwise(e.correspondences, rc);
        PairwiseResult r;
        r.i = e.i;
        r.j = e.j;
        // estimate_pairwise returns the frame-i -> frame-j point map; the
        // edge stores the pose of j in frame i, which is its inverse.
        r.relative = inverse(est.transform);
        // Edges carry the verified matches only; raw mismatches would
        // otherwise inflate every edge RMSE past the truncation threshold.
        const bool labeled =
            e.correspondences.truth_labels.size() == e.correspondences.size();
        for (int idx : est.inlier_indices) {
            if (labeled)
                r.correspondences.add(e.correspondences.points_i[idx],
                                      e.correspondences.points_j[idx],
                                      e.correspondences.truth_labels[idx] != 0);
            else
                r.correspondences.add(e.correspondences.points_i[idx],
                                      e.correspondences.points_j[idx]);
        }
        r.inlier_count = static_cast<int>(est.inlier_indices.size());
        r.sufficient_iterations = est.sufficient_iterations;
        if (!bundle.clouds.empty() && !bundle.clouds[e.i].empty() &&
            !bundle.clouds[e.j].empty())
            r.overlap_score =
                overlap_score(bundle.clouds[e.i], bundle.clouds[e.j], est.transform,
                              cfg.overlap);
        results[k] = std::move(r);
    });
    return results;
}

/// Runs the back-end stages in order on an assembled pose graph, honoring the
/// stage toggles. Returns the final poses and per-stage bookkeeping.
inline PipelineRun run_backend(PoseGraph graph, const PipelineConfig& cfg,
                               const std::vector<RigidTransform>* truth_poses) {
    PipelineRun run;
    detail::StageTimer timer(run.timings);

    std::vector<RigidTransform> poses(graph.vertices.size());
    for (std::size_t v = 0; v < graph.vertices.size(); ++v)
        poses[v] = graph.vertices[v].pose;

    std::vector<Rotation> rotations(poses.size());
    for (std::size_t v = 0; v < poses.size(); ++v) rotations[v] = poses[v].R;

    if (cfg.stages.rotation_averaging) {
        RotAvgConfig rc = cfg.rot_avg;
        rc.use_edge_weights = cfg.use_edge_weights;
        const RotAvgResult rot = timer.time("rotation_averaging", [&] {
            return average_rotations(graph, rc);
        });
        run.rotation_converged = rot.converged;
        rotations = rot.rotations;
        for (std::size_t v = 0; v < poses.size(); ++v) poses[v].R = rotations[v];
    }

    if (cfg.stages.consensus_reestimation) {
        ReestimateResult re = timer.time("translation_reestimation", [&] {
            return reestimate_all_edges(graph, rotations, cfg.eps, cfg.consensus, cfg.threads);
        });
        run.consensus_converged = re.all_converged;
        graph = std::move(re.graph);
        for (std::size_t v = 0; v < poses.size(); ++v) graph.vertices[v].pose = poses[v];
    }

    if (cfg.stages.position_averaging) {
        PosAvgConfig pc = cfg.pos_avg;
        pc.use_edge_weights = cfg.use_edge_weights;
        for (std::size_t v = 0; v < poses.size(); ++v) graph.vertices[v].pose = poses[v];
        const PosAvgResult pos = timer.time("position_averaging", [&] {
            return average_positions(graph, rotations, pc);
        });
        run.positions_converged = pos.converged;
        for (std::size_t v = 0; v < poses.size(); ++v) poses[v].t = pos.positions[v];
    }

    if (cfg.stages.refinement) {
        const RefineResult ref = timer.time("joint_refinement", [&] {
            return refine_poses(graph, poses, cfg.refine);
        });
        run.refinement_converged = ref.converged;
        poses = ref.poses;
    }

    for (std::size_t v = 0; v < graph.vertices.size(); ++v) graph.vertices[v].pose = poses[v];
    run.final_graph = std::move(graph);
    run.final_poses = poses;

    if (truth_poses) {
        EvalReport report = multiway_metrics(run.final_poses, *truth_poses,
                                             run.final_graph.edges, cfg.metrics);
        report.runtimes = run.timings;
        run.report = std::move(report);
    }
    return run;
}

/// Full pipeline on a synthetic scene: generate -> (optionally corrupt) ->
/// pairwise -> build_graph -> back-end -> metrics. Deterministic per seed.
inline PipelineRun run_pipeline_synthetic(const PipelineConfig& config) {
    PipelineConfig cfg = config;
    cfg.scene.rng_seed = cfg.seed;

    std::vector<StageTime> timings;
    detail::StageTimer timer(timings);

    SceneBundle bundle = timer.time("generate_scene", [&] { return generate_scene(cfg.scene); });
    detail::corrupt_edges(bundle.graph, cfg.corrupt_edge_fraction, cfg.seed);

    const std::vector<PairwiseResult> pairwise = timer.time("pairwise_frontend", [&] {
        return run_pairwise_frontend(bundle, cfg);
    });
    PoseGraph graph = timer.time("build_graph", [&] { return build_graph(pairwise); });

    PipelineRun run = run_backend(std::move(graph), cfg, &bundle.truth_poses);
    run.timings.insert(run.timings.begin(), timings.begin(), timings.end());
    if (run.report) run.report->runtimes = run.timings;
    return run;
}

/// Pipeline on a pose-graph file that already carries correspondences:
/// re-estimates pairwise transforms from them, then runs the back-end.
inline PipelineRun run_pipeline_graph(const PoseGraph& input, const PipelineConfig& cfg,
                                      const std::vector<RigidTransform>* truth_poses,
                                      std::vector<std::vector<Vec3>> clouds = {}) {
    SceneBundle bundle;
    bundle.graph = input;
    bundle.clouds = std::move(clouds);
    const std::vector<PairwiseResult> pairwise = run_pairwise_frontend(bundle, cfg);
    PoseGraph graph = build_graph(pairwise);
    return run_backend(std::move(graph), cfg, truth_poses);
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string mask;
    double mean_re_deg = 0.0;
    double mean_te = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::vector<std::string> warnings;
};

/// Parses a stage mask like "R+TR+TA+D" (R = rotation averaging, TR =
/// translation re-estimation, TA = position averaging, D = refinement).
inline StageToggles parse_stage_mask(const std::string& mask) {
    StageToggles t{false, false, false, false};
    std::string token;
    std::istringstream ss(mask);
    while (std::getline(ss, token, '+')) {
        if (token == "R")
            t.rotation_averaging = true;
        else if (token == "TR")
            t.consensus_reestimation = true;
        else if (token == "TA")
            t.position_averaging = true;
        else if (token == "D")
            t.refinement = true;
        else if (!token.empty())
            throw InvalidParameter("unknown stage token '" + token + "' in mask '" + mask +
                                   "'");
    }
    return t;
}

/// Runs the pipeline once per stage mask on identical seeds and reports the
/// RE/TE comparison table. Duplicate masks are dropped with a
/// warning. Means are taken over `n_seeds` consecutive seeds.
inline AblationTable run_ablation(const PipelineConfig& base,
                                  const std::vector<std::string>& masks, int n_seeds = 1) {
    if (masks.size() < 2) throw InvalidParameter("run_ablation: need at least 2 masks");
    AblationTable table;
    std::vector<std::string> unique;
    for (const std::string& m : masks) {
        if (std::find(unique.begin(), unique.end(), m) != unique.end()) {
            table.warnings.push_back("duplicate mask '" + m + "' ignored");
            continue;
        }
        unique.push_back(m);
    }
    for (const std::string& mask : unique) {
        PipelineConfig cfg = base;
        cfg.stages = parse_stage_mask(mask);
        double sum_re = 0.0, sum_te = 0.0;
        for (int s = 0; s < n_seeds; ++s) {
            cfg.seed = base.seed + s;
            const PipelineRun run = run_pipeline_synthetic(cfg);
            sum_re += run.report->mean_re_deg;
            sum_te += run.report->mean_te;
        }
        table.rows.push_back({mask, sum_re / n_seeds, sum_te / n_seeds});
    }
    return table;
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

/// Candidate-translation instances shaped like real consensus inputs: an
/// inlier cluster (about a third of the mass) plus uniform outliers in a
/// fixed-size box.
inline SphereSet make_scaling_instance(int n, double eps, std::uint64_t seed) {
    Rng rng(seed);
    SphereSet s;
    s.radius = eps;
    s.centers.reserve(n);
    const Vec3 truth = rng.uniform_in_box(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5));
    for (int k = 0; k < n; ++k) {
        if (rng.uniform() < 0.35)
            s.centers.push_back(truth + rng.normal_vec3(0.5 * eps));
        else
            s.centers.push_back(rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1)));
    }
    return s;
}

struct ScalingRow {
    int n = 0;
    double bnb_seconds = 0.0;
    double oracle_seconds = 0.0;
    int bnb_inliers = 0;
    int oracle_inliers = 0;
};

/// Times the proposed solver and the exhaustive baseline per candidate count
/// (median of 5 runs each).
inline std::vector<ScalingRow> run_scaling_bench(const std::vector<int>& counts, double eps,
                                                 std::uint64_t seed,
                                                 const ConsensusConfig& cfg = {}) {
    if (counts.empty()) throw InvalidParameter("run_scaling_bench: empty count list");
    for (std::size_t k = 1; k < counts.size(); ++k)
        if (counts[k] < counts[k - 1])
            throw InvalidParameter("run_scaling_bench: counts must be ascending");

    auto median5 = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };

    std::vector<ScalingRow> rows;
    for (int n : counts) {
        ScalingRow row;
        row.n = n;
        std::vector<double> t_bnb, t_oracle;
        for (int rep = 0; rep < 5; ++rep) {
            const SphereSet inst = make_scaling_instance(n, eps, detail::mix_seed(seed, rep));
            auto t0 = std::chrono::steady_clock::now();
            const ConsensusResult bnb = max_consensus_translation(inst, cfg);
            auto t1 = std::chrono::steady_clock::now();
            const ConsensusResult oracle = exhaustive_candidate_oracle(inst);
            auto t2 = std::chrono::steady_clock::now();
            t_bnb.push_back(std::chrono::duration<double>(t1 - t0).count());
            t_oracle.push_back(std::chrono::duration<double>(t2 - t1).count());
            row.bnb_inliers = bnb.inlier_count;
            row.oracle_inliers = oracle.inlier_count;
        }
        row.bnb_seconds = median5(t_bnb);
        row.oracle_seconds = median5(t_oracle);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mosaic

#endif  // MOSAIC_PIPELINE_HPP
