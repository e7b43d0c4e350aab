// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Registration metrics: per-pair RRE/RTE, per-vertex RE/TE after gauge
// alignment, and registration recall over the graph edges.

#ifndef MOSAIC_METRICS_HPP
#define MOSAIC_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/pose_graph.hpp"
#include "mosaic/position_averaging.hpp"
#include "mosaic/rotation_averaging.hpp"

namespace mosaic {

inline double rad_to_deg(double rad) { return rad * 180.0 / M_PI; }
inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }

struct MetricsConfig {
    double rre_success_threshold_deg = 15.0;
    double rte_success_threshold = 0.3;  // meters
};

struct PairMetrics {
    double rre_deg = 0.0;
    double rte = 0.0;
};

/// RRE = geodesic angle between the rotations (degrees); RTE = Euclidean
/// distance between the translations (meters).
inline PairMetrics pairwise_metrics(const RigidTransform& estimated,
                                    const RigidTransform& truth) {
    return {rad_to_deg(rotation_geodesic_angle(estimated.R, truth.R)),
            (estimated.t - truth.t).norm()};
}

struct StageTime {
    std::string stage;
    double seconds = 0.0;
};

struct EvalReport {
    MetricsConfig config;
    std::vector<double> per_vertex_re_deg;
    std::vector<double> per_vertex_te;
    std::vector<PairMetrics> per_pair;  // one per graph edge
    std::optional<double> rr;           // unset when the edge set is empty
    double mean_re_deg = 0.0, median_re_deg = 0.0;
    double mean_te = 0.0, median_te = 0.0;
    double mean_rre_deg = 0.0, median_rre_deg = 0.0;
    double mean_rte = 0.0, median_rte = 0.0;
    std::vector<StageTime> runtimes;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

/// Gauge-aligns the estimates to the truth, then reports per-vertex RE/TE,
/// per-edge RRE/RTE of the induced relative transforms against the truth
/// relatives, and the recall under the config thresholds. All numbers are
/// gauge-invariant.
inline EvalReport multiway_metrics(const std::vector<RigidTransform>& estimated,
                                   const std::vector<RigidTransform>& truth,
                                   const std::vector<Edge>& edges,
                                   const MetricsConfig& cfg = {}) {
    if (estimated.size() != truth.size())
        throw LengthMismatch("multiway_metrics: pose count mismatch");

    EvalReport report;
    report.config = cfg;

    std::vector<Rotation> est_R, tru_R;
    std::vector<Vec3> est_t, tru_t;
    for (std::size_t v = 0; v < estimated.size(); ++v) {
        est_R.push_back(estimated[v].R);
        tru_R.push_back(truth[v].R);
        est_t.push_back(estimated[v].t);
        tru_t.push_back(truth[v].t);
    }
    const AlignedRotations rot = align_rotations_to_truth(est_R, tru_R);
    const AlignedPositions pos = align_positions_to_truth(est_t, tru_t, rot.gauge);
    for (double e : rot.errors) report.per_vertex_re_deg.push_back(rad_to_deg(e));
    report.per_vertex_te = pos.errors;

    int successes = 0;
    for (const Edge& e : edges) {
        const RigidTransform est_rel = relative_from_global(estimated[e.i], estimated[e.j]);
        const RigidTransform tru_rel = relative_from_global(truth[e.i], truth[e.j]);
        const PairMetrics pm = pairwise_metrics(est_rel, tru_rel);
        report.per_pair.push_back(pm);
        if (pm.rre_deg <= cfg.rre_success_threshold_deg && pm.rte <= cfg.rte_success_threshold)
            ++successes;
    }
    if (!edges.empty()) report.rr = double(successes) / double(edges.size());

    report.mean_re_deg = detail::mean_of(report.per_vertex_re_deg);
    report.median_re_deg = detail::median_of(report.per_vertex_re_deg);
    report.mean_te = detail::mean_of(report.per_vertex_te);
    report.median_te = detail::median_of(report.per_vertex_te);
    std::vector<double> rre, rte;
    for (const PairMetrics& pm : report.per_pair) {
        rre.push_back(pm.rre_deg);
        rte.push_back(pm.rte);
    }
    report.mean_rre_deg = detail::mean_of(rre);
    report.median_rre_deg = detail::median_of(rre);
    report.mean_rte = detail::mean_of(rte);
    report.median_rte = detail::median_of(rte);
    return report;
}

inline std::string report_to_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "# rre_threshold_deg=" << r.config.rre_success_threshold_deg
       << " rte_threshold_m=" << r.config.rte_success_threshold << "\n";
    os << "metric,value\n";
    os << "mean_re_deg," << r.mean_re_deg << "\n";
    os << "median_re_deg," << r.median_re_deg << "\n";
    os << "mean_te," << r.mean_te << "\n";
    os << "median_te," << r.median_te << "\n";
    os << "mean_rre_deg," << r.mean_rre_deg << "\n";
    os << "median_rre_deg," << r.median_rre_deg << "\n";
    os << "mean_rte," << r.mean_rte << "\n";
    os << "median_rte," << r.median_rte << "\n";
    os << "rr," << (r.rr ? std::to_string(*r.rr) : std::string("undefined")) << "\n";
    for (const StageTime& st : r.runtimes) os << "time_" << st.stage << "," << st.seconds << "\n";
    os << "vertex,re_deg,te\n";
    for (std::size_t v = 0; v < r.per_vertex_re_deg.size(); ++v)
        os << v << "," << r.per_vertex_re_deg[v] << "," << r.per_vertex_te[v] << "\n";
    os << "pair,rre_deg,rte\n";
    for (std::size_t k = 0; k < r.per_pair.size(); ++k)
        os << k << "," << r.per_pair[k].rre_deg << "," << r.per_pair[k].rte << "\n";
    return os.str();
}

inline std::string report_to_table(const EvalReport& r) {
    std::ostringstream os;
    os << "thresholds: RRE <= " << r.config.rre_success_threshold_deg << " deg, RTE <= "
       << r.config.rte_success_threshold << " m\n";
    os << "RE  (deg): mean " << r.mean_re_deg << "  median " << r.median_re_deg << "\n";
    os << "TE  (m)  : mean " << r.mean_te << "  median " << r.median_te << "\n";
    os << "RRE (deg): mean " << r.mean_rre_deg << "  median " << r.median_rre_deg << "\n";
    os << "RTE (m)  : mean " << r.mean_rte << "  median " << r.median_rte << "\n";
    if (r.rr)
        os << "RR       : " << *r.rr << "\n";
    else
        os << "RR       : undefined (no pairs)\n";
    for (const StageTime& st : r.runtimes)
        os << "time " << st.stage << ": " << st.seconds << " s\n";
    return os.str();
}

}  // namespace mosaic

#endif  // MOSAIC_METRICS_HPP
