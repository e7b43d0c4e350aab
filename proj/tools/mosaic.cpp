// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// mosaic: multiway point cloud registration pipeline.
//
// Subcommands: generate, pairwise, consensus, run, ablate, scale-bench, eval.
// Stage banners and summaries go to stderr; data goes to stdout or files.
// Exit codes: 0 success (warnings allowed), 1 hard error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mosaic/consensus.hpp"
#include "mosaic/graph_io.hpp"
#include "mosaic/metrics.hpp"
#include "mosaic/pairwise.hpp"
#include "mosaic/pipeline.hpp"
#include "mosaic/ply_io.hpp"

namespace {

using namespace mosaic;

void add_scene_options(CLI::App* cmd, SceneConfig& scene) {
    cmd->add_option("--n", scene.n_clouds, "Number of clouds")->capture_default_str();
    cmd->add_option("--points", scene.points_per_cloud, "Points per cloud")
        ->capture_default_str();
    cmd->add_option("--overlap", scene.overlap_fraction, "View overlap fraction (0,1]")
        ->capture_default_str();
    cmd->add_option("--sigma", scene.noise_sigma, "Correspondence noise sigma (m)")
        ->capture_default_str();
    cmd->add_option("--outliers", scene.outlier_ratio, "Correspondence outlier ratio [0,1)")
        ->capture_default_str();
    cmd->add_option("--corr-per-pair", scene.correspondences_per_pair,
                    "Correspondences per cloud pair")
        ->capture_default_str();
    cmd->add_option("--span", scene.neighbor_span, "Pair clouds with |i-j| <= span")
        ->capture_default_str();
}

void add_pipeline_options(CLI::App* cmd, PipelineConfig& cfg, bool& no_edge_weights,
                          bool& disable_rotation, bool& disable_consensus,
                          bool& disable_positions, bool& disable_refinement,
                          double& overlap_radius) {
    cmd->add_option("--eps", cfg.eps, "Inlier radius epsilon (m); seeds stage defaults")
        ->capture_default_str();
    cmd->add_option("--overlap-radius", overlap_radius,
                    "Overlap-score neighbor radius (m); defaults to eps");
    cmd->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--threads", cfg.threads, "Worker threads for parallel maps")
        ->capture_default_str();
    cmd->add_option("--corrupt-edges", cfg.corrupt_edge_fraction,
                    "Fraction of edges replaced by pure mismatches")
        ->capture_default_str();
    cmd->add_option("--ransac-iters", cfg.ransac.max_iterations, "RANSAC iterations per edge")
        ->capture_default_str();
    cmd->add_option("--zoom-factor", cfg.consensus.zoom_factor,
                    "Consensus grid subdivision per axis")
        ->capture_default_str();
    cmd->add_option("--max-zoom", cfg.consensus.max_zoom, "Consensus zoom level cap")
        ->capture_default_str();
    cmd->add_option("--rre-thr", cfg.metrics.rre_success_threshold_deg,
                    "Recall rotation threshold (deg)")
        ->capture_default_str();
    cmd->add_option("--rte-thr", cfg.metrics.rte_success_threshold,
                    "Recall translation threshold (m)")
        ->capture_default_str();
    cmd->add_flag("--no-edge-weights", no_edge_weights,
                  "Ignore edge weights in the averaging stages");
    cmd->add_flag("--disable-rotation-averaging", disable_rotation, "Skip rotation averaging");
    cmd->add_flag("--disable-consensus", disable_consensus,
                  "Skip consensus translation re-estimation");
    cmd->add_flag("--disable-position-averaging", disable_positions, "Skip position averaging");
    cmd->add_flag("--disable-refinement", disable_refinement, "Skip joint refinement");
}

void apply_stage_flags(PipelineConfig& cfg, bool no_edge_weights, bool disable_rotation,
                       bool disable_consensus, bool disable_positions,
                       bool disable_refinement) {

    cfg.use_edge_weights = !no_edge_weights;
    cfg.stages.rotation_averaging = !disable_rotation;
    cfg.stages.consensus_reestimation = !disable_consensus;
    cfg.stages.position_averaging = !disable_positions;
    cfg.stages.refinement = !disable_refinement;
}

nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["thresholds"]["rre_deg"] = r.config.rre_success_threshold_deg;
    j["thresholds"]["rte_m"] = r.config.rte_success_threshold;
    j["mean_re_deg"] = r.mean_re_deg;
    j["median_re_deg"] = r.median_re_deg;
    j["mean_te"] = r.mean_te;
    j["median_te"] = r.median_te;
    j["mean_rre_deg"] = r.mean_rre_deg;
    j["median_rre_deg"] = r.median_rre_deg;
    j["mean_rte"] = r.mean_rte;
    j["median_rte"] = r.median_rte;
    if (r.rr)
        j["rr"] = *r.rr;
    else
        j["rr"] = nullptr;
    j["per_vertex_re_deg"] = r.per_vertex_re_deg;
    j["per_vertex_te"] = r.per_vertex_te;
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << text;
}

std::vector<RigidTransform> poses_of(const PoseGraph& graph) {
    std::vector<RigidTransform> poses;
    for (const Vertex& v : graph.vertices) poses.push_back(v.pose);
    return poses;
}

/// Loads cloud_000.ply, cloud_001.ply, ... for the graph's vertices; used
/// for overlap scoring. Missing files are an error.
std::vector<std::vector<Vec3>> load_clouds(const std::string& dir, std::size_t n) {
    std::vector<std::vector<Vec3>> clouds;
    for (std::size_t i = 0; i < n; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "cloud_%03zu.ply", i);
        clouds.push_back(read_ply_file((std::filesystem::path(dir) / name).string()));
    }
    return clouds;
}

void print_run_summary(std::ostream& err, const PipelineRun& run) {
    for (const StageTime& st : run.timings)
        err << "[stage] " << st.stage << ": " << st.seconds << " s\n";
    if (!run.rotation_converged)
        err << "[warn] rotation averaging hit its iteration cap\n";
    if (!run.consensus_converged)
        err << "[warn] consensus re-estimation hit max_zoom on some edge\n";
    if (!run.positions_converged)
        err << "[warn] position averaging hit its iteration cap\n";
    if (!run.refinement_converged) err << "[warn] joint refinement hit its iteration cap\n";
}

void emit_run_outputs(const PipelineRun& run, const PipelineConfig& cfg,
                      const std::string& out_graph, const std::string& report_csv,
                      const std::string& report_json) {
    std::vector<std::string> header = config_echo(cfg);
    header.push_back(std::string("rotation_converged = ") +
                     (run.rotation_converged ? "1" : "0"));
    header.push_back(std::string("consensus_converged = ") +
                     (run.consensus_converged ? "1" : "0"));
    header.push_back(std::string("positions_converged = ") +
                     (run.positions_converged ? "1" : "0"));
    header.push_back(std::string("refinement_converged = ") +
                     (run.refinement_converged ? "1" : "0"));
    if (!out_graph.empty()) write_graph_file(out_graph, run.final_graph, header);
    if (run.report) {
        // Reports exclude wall-clock times so outputs stay byte-identical
        // across runs; timings are printed to stderr instead.
        EvalReport stripped = *run.report;
        stripped.runtimes.clear();
        if (!report_csv.empty()) write_text_file(report_csv, report_to_csv(stripped));
        if (!report_json.empty()) write_text_file(report_json, report_to_json(stripped).dump(2) + "\n");
        std::cout << report_to_table(stripped);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiway point cloud registration via pose-graph optimization"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);

    // generate ---------------------------------------------------------
    auto* generate = app.add_subcommand("generate", "Generate a synthetic scene");
    SceneConfig scene;
    std::uint64_t gen_seed = 0;
    std::string out_dir = "scene";
    add_scene_options(generate, scene);
    generate->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
    generate->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    // pairwise ---------------------------------------------------------
    auto* pairwise = app.add_subcommand(
        "pairwise", "Estimate relative poses from a graph's correspondences");
    std::string pw_scene, pw_out = "pairwise.graph";
    PipelineConfig pw_cfg = make_pipeline_config();
    pairwise->add_option("--scene", pw_scene, "Input pose-graph file with CORR records")
        ->required();
    std::string pw_clouds;
    pairwise->add_option("--cloud-dir", pw_clouds,
                         "Directory with cloud_###.ply files for overlap scoring");
    pairwise->add_option("--out", pw_out, "Output pose-graph file")->capture_default_str();
    pairwise->add_option("--eps", pw_cfg.eps, "RANSAC inlier threshold (m)")
        ->capture_default_str();
    pairwise->add_option("--seed", pw_cfg.seed, "RNG seed")->capture_default_str();
    pairwise->add_option("--threads", pw_cfg.threads, "Worker threads")->capture_default_str();
    pairwise->add_option("--ransac-iters", pw_cfg.ransac.max_iterations, "RANSAC iterations")
        ->capture_default_str();

    // consensus --------------------------------------------------------
    auto* consensus = app.add_subcommand(
        "consensus", "Maximum-consensus translation from candidate centers");
    std::string centers_path, dump_cells;
    int random_n = 0;
    std::uint64_t cons_seed = 0;
    double cons_eps = 0.03;
    ConsensusConfig cons_cfg;
    consensus->add_option("--centers", centers_path, "Text file with one 'x y z' per line");
    consensus->add_option("--random-n", random_n, "Generate a random instance of this size");
    consensus->add_option("--seed", cons_seed, "RNG seed for --random-n")
        ->capture_default_str();
    consensus->add_option("--eps", cons_eps, "Inlier radius (m)")->capture_default_str();
    consensus->add_option("--zoom-factor", cons_cfg.zoom_factor, "Grid subdivision per axis")
        ->capture_default_str();
    consensus->add_option("--max-zoom", cons_cfg.max_zoom, "Zoom level cap")
        ->capture_default_str();
    consensus->add_option("--dump-cells", dump_cells,
                          "CSV path for per-level (zoom_level, cells, max_count)");

    // run ----------------------------------------------------------------
    auto* run_cmd = app.add_subcommand("run", "Run the full registration pipeline");
    PipelineConfig run_cfg = make_pipeline_config();
    bool synthetic = false;
    bool no_edge_weights = false, dis_rot = false, dis_cons = false, dis_pos = false,
         dis_ref = false;
    double run_overlap_radius = 0.0;
    std::string run_scene, run_truth, run_out = "final.graph", run_csv, run_json;
    run_cmd->add_flag("--synthetic", synthetic, "Generate the input scene from --seed");
    add_scene_options(run_cmd, run_cfg.scene);
    add_pipeline_options(run_cmd, run_cfg, no_edge_weights, dis_rot, dis_cons, dis_pos,
                         dis_ref, run_overlap_radius);
    run_cmd->add_option("--scene", run_scene, "Input pose-graph file with CORR records");
    std::string run_clouds;
    run_cmd->add_option("--cloud-dir", run_clouds,
                        "Directory with cloud_###.ply files for overlap scoring");
    run_cmd->add_option("--truth", run_truth, "Ground-truth pose-graph file for metrics");
    run_cmd->add_option("--out", run_out, "Output pose-graph file")->capture_default_str();
    run_cmd->add_option("--report-csv", run_csv, "Metrics CSV path");
    run_cmd->add_option("--report-json", run_json, "Metrics JSON path");

    // ablate -------------------------------------------------------------
    auto* ablate = app.add_subcommand("ablate", "Compare stage combinations");
    PipelineConfig ab_cfg = make_pipeline_config();
    std::string mask_list = "TA,R+TA,R+TR+TA,R+TR+TA+D";
    int ab_seeds = 1;
    bool ab_now = false, ab_dis_rot = false, ab_dis_cons = false, ab_dis_pos = false,
         ab_dis_ref = false;
    double ab_overlap_radius = 0.0;
    add_scene_options(ablate, ab_cfg.scene);
    add_pipeline_options(ablate, ab_cfg, ab_now, ab_dis_rot, ab_dis_cons, ab_dis_pos,
                         ab_dis_ref, ab_overlap_radius);
    ablate->add_option("--masks", mask_list, "Comma-separated stage masks")
        ->capture_default_str();
    ablate->add_option("--seeds", ab_seeds, "Seeds per mask (means over seeds)")
        ->capture_default_str();

    // scale-bench ---------------------------------------------------------
    auto* scale = app.add_subcommand("scale-bench",
                                     "Time the consensus solver against the exhaustive oracle");
    std::string counts_list = "1000,2000,4000,8000";
    double sb_eps = 0.1;
    std::uint64_t sb_seed = 0;
    std::string sb_out;
    scale->add_option("--counts", counts_list, "Comma-separated ascending candidate counts")
        ->capture_default_str();
    scale->add_option("--eps", sb_eps, "Inlier radius (m)")->capture_default_str();
    scale->add_option("--seed", sb_seed, "RNG seed")->capture_default_str();
    scale->add_option("--out", sb_out, "CSV output path (default stdout)");

    // eval ----------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Evaluate an estimated graph against ground truth");
    std::string ev_est, ev_truth;
    bool ev_json = false;
    MetricsConfig ev_cfg;
    eval->add_option("--estimated", ev_est, "Estimated pose-graph file")->required();
    eval->add_option("--truth", ev_truth, "Ground-truth pose-graph file")->required();
    eval->add_flag("--json", ev_json, "Emit a machine-readable JSON report");
    eval->add_option("--rre-thr", ev_cfg.rre_success_threshold_deg,
                     "Recall rotation threshold (deg)")
        ->capture_default_str();
    eval->add_option("--rte-thr", ev_cfg.rte_success_threshold,
                     "Recall translation threshold (m)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*generate) {
            scene.rng_seed = gen_seed;
            const SceneBundle bundle = generate_scene(scene);
            std::filesystem::create_directories(out_dir);
            for (std::size_t i = 0; i < bundle.clouds.size(); ++i) {
                char name[64];
                std::snprintf(name, sizeof(name), "cloud_%03zu.ply", i);
                write_ply_file((std::filesystem::path(out_dir) / name).string(),
                               bundle.clouds[i]);
            }
            write_graph_file((std::filesystem::path(out_dir) / "scene.graph").string(),
                             bundle.graph,
                             {"synthetic scene: truth poses, truth relatives, correspondences",
                              "seed = " + std::to_string(gen_seed)});
            std::cerr << "[generate] wrote " << bundle.clouds.size() << " clouds and "
                      << bundle.graph.edges.size() << " edges to " << out_dir << "\n";
        } else if (*pairwise) {
            pw_cfg.apply_eps(pw_cfg.eps);
            const PoseGraph input = read_graph_file(pw_scene);
            SceneBundle bundle;
            bundle.graph = input;
            if (!pw_clouds.empty())
                bundle.clouds = load_clouds(pw_clouds, input.vertices.size());
            const std::vector<PairwiseResult> results = run_pairwise_frontend(bundle, pw_cfg);
            int needed = 0;
            for (const PairwiseResult& r : results)
                needed = std::max(needed, r.sufficient_iterations);
            const PoseGraph graph = build_graph(results);
            write_graph_file(pw_out, graph, config_echo(pw_cfg));
            std::cerr << "[pairwise] estimated " << graph.edges.size() << " edges; confidence "
                      << pw_cfg.ransac.confidence << " needs <= " << needed
                      << " iterations (ran " << pw_cfg.ransac.max_iterations << ")\n";
        } else if (*consensus) {
            SphereSet spheres;
            spheres.radius = cons_eps;
            if (!centers_path.empty()) {
                std::ifstream is(centers_path);
                if (!is) throw IoError("cannot open: " + centers_path);
                Vec3 c;
                while (is >> c.x() >> c.y() >> c.z()) spheres.centers.push_back(c);
            } else if (random_n > 0) {
                spheres = make_scaling_instance(random_n, cons_eps, cons_seed);
            } else {
                std::cerr << "consensus: need --centers or --random-n\n";
                return 2;
            }
            const ConsensusResult result = max_consensus_translation(spheres, cons_cfg);
            std::cout << "translation " << format_double(result.translation.x()) << ' '
                      << format_double(result.translation.y()) << ' '
                      << format_double(result.translation.z()) << "\n";
            std::cout << "inliers " << result.inlier_count << " of " << spheres.centers.size()
                      << "\n";
            std::cout << "zoom_levels " << result.zoom_levels << " cells_visited "
                      << result.cells_visited << " converged " << result.converged << "\n";
            if (!dump_cells.empty()) {
                std::ostringstream os;
                os << "zoom_level,cells,max_count\n";
                for (const ZoomLevelStats& ls : result.level_stats)
                    os << ls.zoom_level << "," << ls.cells << "," << ls.max_count << "\n";
                write_text_file(dump_cells, os.str());
            }
            if (!result.converged)
                std::cerr << "[warn] consensus hit max_zoom; best-so-far returned\n";
        } else if (*run_cmd) {
            apply_stage_flags(run_cfg, no_edge_weights, dis_rot, dis_cons, dis_pos, dis_ref);
            run_cfg.apply_eps(run_cfg.eps);
            if (run_overlap_radius > 0.0) run_cfg.overlap.radius = run_overlap_radius;
            PipelineRun result;
            if (synthetic) {
                result = run_pipeline_synthetic(run_cfg);
            } else {
                if (run_scene.empty()) {
                    std::cerr << "run: need --synthetic or --scene\n";
                    return 2;
                }
                const PoseGraph input = read_graph_file(run_scene);
                std::vector<RigidTransform> truth;
                const PoseGraph truth_graph =
                    run_truth.empty() ? PoseGraph{} : read_graph_file(run_truth);
                if (!run_truth.empty()) truth = poses_of(truth_graph);
                std::vector<std::vector<Vec3>> clouds;
                if (!run_clouds.empty())
                    clouds = load_clouds(run_clouds, input.vertices.size());
                result = run_pipeline_graph(input, run_cfg,
                                            run_truth.empty() ? nullptr : &truth, clouds);
            }
            print_run_summary(std::cerr, result);
            emit_run_outputs(result, run_cfg, run_out, run_csv, run_json);
        } else if (*ablate) {
            apply_stage_flags(ab_cfg, ab_now, ab_dis_rot, ab_dis_cons, ab_dis_pos, ab_dis_ref);
            ab_cfg.apply_eps(ab_cfg.eps);
            if (ab_overlap_radius > 0.0) ab_cfg.overlap.radius = ab_overlap_radius;
            std::vector<std::string> masks;
            std::istringstream ss(mask_list);
            std::string token;
            while (std::getline(ss, token, ',')) masks.push_back(token);
            const AblationTable table = run_ablation(ab_cfg, masks, ab_seeds);
            for (const std::string& w : table.warnings) std::cerr << "[warn] " << w << "\n";
            std::cout << "mask,mean_re_deg,mean_te\n";
            for (const AblationRow& row : table.rows)
                std::cout << row.mask << "," << row.mean_re_deg << "," << row.mean_te << "\n";
        } else if (*scale) {
            std::vector<int> counts;
            std::istringstream ss(counts_list);
            std::string token;
            while (std::getline(ss, token, ',')) counts.push_back(std::stoi(token));
            if (counts.empty()) {
                std::cerr << "scale-bench: empty count list\n";
                return 2;
            }
            const auto rows = run_scaling_bench(counts, sb_eps, sb_seed);
            std::ostringstream os;
            os << "n,bnb_seconds,oracle_seconds,bnb_inliers,oracle_inliers\n";
            for (const ScalingRow& r : rows)
                os << r.n << "," << r.bnb_seconds << "," << r.oracle_seconds << ","
                   << r.bnb_inliers << "," << r.oracle_inliers << "\n";
            if (sb_out.empty())
                std::cout << os.str();
            else
                write_text_file(sb_out, os.str());
        } else if (*eval) {
            const PoseGraph est = read_graph_file(ev_est);
            const PoseGraph truth = read_graph_file(ev_truth);
            const EvalReport report =
                multiway_metrics(poses_of(est), poses_of(truth), truth.edges, ev_cfg);
            if (ev_json)
                std::cout << report_to_json(report).dump(2) << "\n";
            else
                std::cout << report_to_csv(report);
        }
    } catch (const InvalidParameter& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
