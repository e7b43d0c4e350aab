// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Global rotation averaging: a robust L1 stage (per-vertex Weiszfeld medians
// in the tangent space, swept in BFS order) followed by IRLS refinement with
// Cauchy-type weights. Gauss-Seidel updates keep the solve deterministic.

#ifndef MOSAIC_ROTATION_AVERAGING_HPP
#define MOSAIC_ROTATION_AVERAGING_HPP

#include <cmath>
#include <queue>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/pose_graph.hpp"

namespace mosaic {

struct RotAvgConfig {
    int l1_max_iters = 32;
    int irls_max_iters = 128;
    double step_tolerance = 1e-10;      // radians
    double irls_kernel_width = 0.0873;  // sigma_r, radians (~5 deg)
    double weight_floor = 1e-6;
    bool use_edge_weights = true;
};

struct RotAvgResult {
    std::vector<Rotation> rotations;  // one per vertex, anchor = identity
    bool converged = true;
    int l1_iterations = 0;
    int irls_iterations = 0;
    double final_objective = 0.0;
};

namespace detail {

struct VertexNeighbors {
    std::vector<std::pair<int, int>> links;  // (edge index, neighbor vertex)
};

inline std::vector<int> bfs_order_from(int anchor, int n,
                                       const std::vector<VertexNeighbors>& adj) {
    std::vector<int> order;
    std::vector<bool> seen(n, false);
    std::queue<int> queue;
    queue.push(anchor);
    seen[anchor] = true;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop();
        order.push_back(v);
        for (const auto& [edge_idx, u] : adj[v].links) {
            if (!seen[u]) {
                seen[u] = true;
                queue.push(u);
            }
        }
    }
    if (static_cast<int>(order.size()) != n)
        throw DisconnectedGraph("rotation averaging: graph is not connected");
    return order;
}

/// Rotation for vertex v implied by one edge and the neighbor's rotation.
inline Rotation implied_rotation(const Edge& e, int v, const std::vector<Rotation>& R) {
    // Z_ij ~ R_i^T R_j, so R_j = R_i Z and R_i = R_j Z^T.
    return v == e.j ? Rotation(R[e.i] * e.relative.R)
                    : Rotation(R[e.j] * e.relative.R.transpose());
}

}  // namespace detail

/// Robust objective tracked by the IRLS stage: sum_e w_e sigma^2 log(1 +
/// theta_e^2/sigma^2), whose IRLS weight is sigma^2/(sigma^2 + theta^2).
inline double rotation_irls_objective(const PoseGraph& graph, const std::vector<Rotation>& R,
                                      const RotAvgConfig& cfg) {
    const double s2 = cfg.irls_kernel_width * cfg.irls_kernel_width;
    double obj = 0.0;
    for (const Edge& e : graph.edges) {
        const double theta =
            rotation_geodesic_angle(e.relative.R, Rotation(R[e.i].transpose() * R[e.j]));
        obj += (cfg.use_edge_weights ? e.weight : 1.0) * s2 * std::log1p(theta * theta / s2);
    }
    return obj;
}

/// Recovers global orientations from the relative rotations on the edges.
/// Starts from the graph's current vertex rotations, fixes the anchor, and
/// re-gauges so the anchor rotation is the identity on output. Never throws
/// for slow convergence; the flag on the result reports it.
inline RotAvgResult average_rotations(const PoseGraph& graph, const RotAvgConfig& cfg) {
    if (cfg.l1_max_iters < 1 || cfg.irls_max_iters < 1 || !(cfg.step_tolerance > 0.0) ||
        !(cfg.irls_kernel_width > 0.0))
        throw InvalidParameter("average_rotations: bad RotAvgConfig");
    const int n = static_cast<int>(graph.vertices.size());
    if (n == 0) throw EmptyInput("average_rotations: empty graph");

    int anchor = -1;
    for (int v = 0; v < n; ++v)
        if (graph.vertices[v].fixed) anchor = v;

    std::vector<detail::VertexNeighbors> adj(n);
    for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const Edge& e = graph.edges[k];
        adj[e.i].links.emplace_back(static_cast<int>(k), e.j);
        adj[e.j].links.emplace_back(static_cast<int>(k), e.i);
    }
    const std::vector<int> order = detail::bfs_order_from(std::max(anchor, 0), n, adj);

    RotAvgResult result;
    result.rotations.resize(n);
    for (int v = 0; v < n; ++v) result.rotations[v] = graph.vertices[v].pose.R;
    std::vector<Rotation>& R = result.rotations;

    const double s2 = cfg.irls_kernel_width * cfg.irls_kernel_width;

    // Stage 1: unweighted L1 via per-vertex Weiszfeld medians of the
    // neighbor-implied tangent residuals.
    for (int iter = 0; iter < cfg.l1_max_iters; ++iter) {
        double max_step = 0.0;
        for (int v : order) {
            if (v == anchor) continue;
            std::vector<Vec3> deltas;
            deltas.reserve(adj[v].links.size());
            for (const auto& [edge_idx, u] : adj[v].links)
                deltas.push_back(
                    log_so3(R[v].transpose() * detail::implied_rotation(graph.edges[edge_idx], v, R)));
            if (deltas.empty()) continue;

            Vec3 x = Vec3::Zero();
            for (const Vec3& d : deltas) x += d;
            x /= double(deltas.size());
            for (int w_iter = 0; w_iter < 10; ++w_iter) {
                Vec3 num = Vec3::Zero();
                double den = 0.0;
                for (const Vec3& d : deltas) {
                    const double w = 1.0 / std::max((d - x).norm(), 1e-9);
                    num += w * d;
                    den += w;
                }
                const Vec3 next = num / den;
                const double move = (next - x).norm();
                x = next;
                if (move < 1e-12) break;
            }
            R[v] = project_to_so3(R[v] * exp_so3(x));
            max_step = std::max(max_step, x.norm());
        }
        result.l1_iterations = iter + 1;
        if (max_step < cfg.step_tolerance) break;
    }

    // Stage 2: IRLS with w = sigma^2/(sigma^2 + theta^2) (optionally times
    // edge.weight). A sweep that increases the robust objective is reverted,
    // so accepted iterations are non-increasing by construction.
    double objective = rotation_irls_objective(graph, R, cfg);
    bool irls_converged = false;
    for (int iter = 0; iter < cfg.irls_max_iters; ++iter) {
        const std::vector<Rotation> backup = R;
        double max_step = 0.0;
        for (int v : order) {
            if (v == anchor) continue;
            Vec3 num = Vec3::Zero();
            double den = 0.0;
            for (const auto& [edge_idx, u] : adj[v].links) {
                const Edge& e = graph.edges[edge_idx];
                const Vec3 delta =
                    log_so3(R[v].transpose() * detail::implied_rotation(e, v, R));
                const double theta = delta.norm();
                double w = s2 / (s2 + theta * theta);
                if (cfg.use_edge_weights) w *= e.weight;
                w = std::max(w, cfg.weight_floor);
                num += w * delta;
                den += w;
            }
            if (den <= 0.0) continue;
            const Vec3 x = num / den;
            R[v] = project_to_so3(R[v] * exp_so3(x));
            max_step = std::max(max_step, x.norm());
        }
        const double new_objective = rotation_irls_objective(graph, R, cfg);
        if (new_objective > objective + 1e-12) {
            R = backup;
            irls_converged = true;
            break;
        }
        objective = new_objective;
        result.irls_iterations = iter + 1;
        if (max_step < cfg.step_tolerance) {
            irls_converged = true;
            break;
        }
    }
    result.converged = irls_converged;
    result.final_objective = objective;

    // Re-gauge so the anchor is exactly the identity.
    if (anchor >= 0) {
        const Rotation gauge = R[anchor].transpose();
        for (int v = 0; v < n; ++v) R[v] = project_to_so3(gauge * R[v]);
    }
    return result;
}

struct AlignedRotations {
    std::vector<Rotation> rotations;  // gauge applied: comparable to truth
    std::vector<double> errors;       // per-vertex geodesic angle, radians
    Rotation gauge = Rotation::Identity();  // estimated ~ gauge * truth
};

/// Removes the global rotation gauge before error computation: finds the
/// single G minimizing sum ||R_est_i - G R_truth_i||_F^2 (chordal L2, via the
/// polar factor of sum R_est R_truth^T) and reports geodesic errors.
inline AlignedRotations align_rotations_to_truth(const std::vector<Rotation>& estimated,
                                                 const std::vector<Rotation>& truth) {
    if (estimated.size() != truth.size())
        throw LengthMismatch("align_rotations_to_truth: length mismatch");
    Mat3 acc = Mat3::Zero();
    for (std::size_t v = 0; v < estimated.size(); ++v)
        acc += estimated[v] * truth[v].transpose();
    AlignedRotations out;
    out.gauge = estimated.empty() ? Rotation::Identity() : project_to_so3(acc);
    out.rotations.reserve(estimated.size());
    out.errors.reserve(estimated.size());
    for (std::size_t v = 0; v < estimated.size(); ++v) {
        out.rotations.push_back(project_to_so3(out.gauge.transpose() * estimated[v]));
        out.errors.push_back(rotation_geodesic_angle(out.rotations.back(), truth[v]));
    }
    return out;
}

}  // namespace mosaic

#endif  // MOSAIC_ROTATION_AVERAGING_HPP
