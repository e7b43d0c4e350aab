// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Global position averaging with fixed rotations: Levenberg-Marquardt on the
// per-edge constraints R_i^T (t_j - t_i) = t_ij under a truncated soft-L1
// robust loss. The residual is linear in the positions, so the damped normal
// equations are exact up to the robust reweighting.

#ifndef MOSAIC_POSITION_AVERAGING_HPP
#define MOSAIC_POSITION_AVERAGING_HPP

#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/pose_graph.hpp"
#include "mosaic/rotation_averaging.hpp"

namespace mosaic {

struct PosAvgConfig {
    double loss_scale = 0.03;  // s: soft-L1 scale, meters
    double truncation = 0.09;  // c: flat beyond this residual, meters (c > s)
    int max_iters = 100;
    double gradient_tolerance = 1e-10;
    bool use_edge_weights = true;
    double lambda_init = 1e-3;
};

struct PosAvgResult {
    std::vector<Vec3> positions;
    bool converged = true;
    int iterations = 0;
    double final_objective = 0.0;
};

/// Soft-L1 on u = ||r||^2/s^2, truncated: rho(u) = min(2(sqrt(1+u)-1), rho_c).
/// Evaluated as 2u/(sqrt(1+u)+1), which keeps precision for tiny u where the
/// naive form cancels to zero.
inline double soft_l1_truncated(double u, double u_trunc) {
    const double v = std::min(u, u_trunc);
    return 2.0 * v / (std::sqrt(1.0 + v) + 1.0);
}

/// Stacked 3E residual vector r_e = R_i^T (t_j - t_i) - t_ij.
inline Eigen::VectorXd position_residual_vector(const PoseGraph& graph,
                                                const std::vector<Rotation>& rotations,
                                                const std::vector<Vec3>& positions) {
    Eigen::VectorXd r(3 * graph.edges.size());
    for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const Edge& e = graph.edges[k];
        r.segment<3>(3 * k) =
            rotations[e.i].transpose() * (positions[e.j] - positions[e.i]) - e.relative.t;
    }
    return r;
}

/// Analytic Jacobian of the stacked residuals w.r.t. all 3n position
/// coordinates (anchor columns included; the solver masks them out).
inline Eigen::MatrixXd position_jacobian(const PoseGraph& graph,
                                         const std::vector<Rotation>& rotations) {
    const std::size_t n = graph.vertices.size();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3 * graph.edges.size(), 3 * n);
    for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const Edge& e = graph.edges[k];
        const Mat3 RiT = rotations[e.i].transpose();
        J.block<3, 3>(3 * k, 3 * e.i) = -RiT;
        J.block<3, 3>(3 * k, 3 * e.j) = RiT;
    }
    return J;
}

inline double position_objective(const PoseGraph& graph, const std::vector<Rotation>& rotations,
                                 const std::vector<Vec3>& positions, const PosAvgConfig& cfg) {
    const double s2 = cfg.loss_scale * cfg.loss_scale;
    const double u_trunc = (cfg.truncation * cfg.truncation) / s2;
    double f = 0.0;
    for (const Edge& e : graph.edges) {
        const Vec3 r =
            rotations[e.i].transpose() * (positions[e.j] - positions[e.i]) - e.relative.t;
        const double w = cfg.use_edge_weights ? e.weight : 1.0;
        f += w * soft_l1_truncated(r.squaredNorm() / s2, u_trunc);
    }
    return f;
}

/// Solves for global positions given fixed rotations and the edge
/// measurements, minimizing sum_e w_e rho(||r_e||^2/s^2) with the anchor
/// removed from the parameter vector. Damping starts at lambda_init, x10 on a
/// rejected step, x0.5 on an accepted one. Slow convergence sets a flag and
/// returns the best iterate.
inline PosAvgResult average_positions(const PoseGraph& graph,
                                      const std::vector<Rotation>& rotations,
                                      const PosAvgConfig& cfg) {
    if (rotations.size() != graph.vertices.size())
        throw LengthMismatch("average_positions: rotations/vertices mismatch");
    if (!(cfg.loss_scale > 0.0) || !(cfg.truncation > cfg.loss_scale))
        throw InvalidParameter("average_positions: require 0 < s < c");
    const int n = static_cast<int>(graph.vertices.size());
    if (n == 0) throw EmptyInput("average_positions: empty graph");

    {
        const auto components = detail::connected_components(n, graph.edges);
        if (components.size() > 1)
            throw DisconnectedGraph("average_positions: graph has " +
                                    std::to_string(components.size()) + " components: " +
                                    detail::component_list_string(components));
    }

    int anchor = 0;
    for (int v = 0; v < n; ++v)
        if (graph.vertices[v].fixed) anchor = v;

    PosAvgResult result;
    result.positions.resize(n);
    for (int v = 0; v < n; ++v) result.positions[v] = graph.vertices[v].pose.t;
    std::vector<Vec3>& t = result.positions;

    // Free-parameter layout: 3 coordinates per non-anchor vertex.
    std::vector<int> param_of(n, -1);
    int n_free = 0;
    for (int v = 0; v < n; ++v)
        if (v != anchor) param_of[v] = 3 * n_free++;

    const double s2 = cfg.loss_scale * cfg.loss_scale;
    const double u_trunc = (cfg.truncation * cfg.truncation) / s2;

    double objective = position_objective(graph, rotations, t, cfg);
    double lambda = cfg.lambda_init;
    bool converged = false;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3 * n_free, 3 * n_free);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(3 * n_free);
        for (const Edge& e : graph.edges) {
            const Mat3 RiT = rotations[e.i].transpose();
            const Vec3 r = RiT * (t[e.j] - t[e.i]) - e.relative.t;
            const double u = r.squaredNorm() / s2;
            if (u >= u_trunc) continue;  // flat loss: zero gradient
            const double w = cfg.use_edge_weights ? e.weight : 1.0;
            const double alpha = w / (s2 * std::sqrt(1.0 + u));  // w rho'(u)/s^2
            const int pi = param_of[e.i], pj = param_of[e.j];
            // J blocks are -R_i^T at i and +R_i^T at j.
            if (pi >= 0) {
                H.block<3, 3>(pi, pi) += alpha * Mat3::Identity();
                g.segment<3>(pi) += alpha * (-(RiT.transpose() * r));
            }
            if (pj >= 0) {
                H.block<3, 3>(pj, pj) += alpha * Mat3::Identity();
                g.segment<3>(pj) += alpha * (RiT.transpose() * r);
            }
            if (pi >= 0 && pj >= 0) {
                H.block<3, 3>(pi, pj) -= alpha * Mat3::Identity();
                H.block<3, 3>(pj, pi) -= alpha * Mat3::Identity();
            }
        }

        if (g.lpNorm<Eigen::Infinity>() < cfg.gradient_tolerance) {
            converged = true;
            result.iterations = iter;
            break;
        }

        bool accepted = false;
        while (lambda < 1e14) {
            Eigen::MatrixXd damped = H;
            damped.diagonal().array() += lambda;
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);

            std::vector<Vec3> trial = t;
            for (int v = 0; v < n; ++v)
                if (param_of[v] >= 0) trial[v] += delta.segment<3>(param_of[v]);
            const double trial_objective = position_objective(graph, rotations, trial, cfg);
            if (trial_objective <= objective) {
                t = trial;
                objective = trial_objective;
                lambda *= 0.5;
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        result.iterations = iter + 1;
        if (!accepted) {
            converged = true;  // no descent direction left: local minimum
            break;
        }
    }

    result.converged = converged;
    result.final_objective = objective;
    return result;
}

struct AlignedPositions {
    std::vector<Vec3> positions;  // gauge removed: comparable to truth
    std::vector<double> errors;   // per-vertex Euclidean error, meters
    Vec3 offset = Vec3::Zero();   // estimated ~ gauge_rotation * truth + offset
};

/// Removes the translation part of the gauge given the rotation part from
/// align_rotations_to_truth: best offset is the mean residual.
inline AlignedPositions align_positions_to_truth(const std::vector<Vec3>& estimated,
                                                 const std::vector<Vec3>& truth,
                                                 const Rotation& gauge_rotation) {
    if (estimated.size() != truth.size())
        throw LengthMismatch("align_positions_to_truth: length mismatch");
    AlignedPositions out;
    if (estimated.empty()) return out;
    Vec3 offset = Vec3::Zero();
    for (std::size_t v = 0; v < estimated.size(); ++v)
        offset += estimated[v] - gauge_rotation * truth[v];
    offset /= double(estimated.size());
    out.offset = offset;
    out.positions.reserve(estimated.size());
    out.errors.reserve(estimated.size());
    for (std::size_t v = 0; v < estimated.size(); ++v) {
        out.positions.push_back(gauge_rotation.transpose() * (estimated[v] - offset));
        out.errors.push_back((out.positions.back() - truth[v]).norm());
    }
    return out;
}

}  // namespace mosaic

#endif  // MOSAIC_POSITION_AVERAGING_HPP
