// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Final joint optimization of all global poses, minimizing the truncated
// per-edge correspondence RMSE: L = sum_e min(eps_e, gamma). Edges above the
// truncation contribute a constant gamma and zero gradient; the smooth part
// is optimized in its equivalent squared form by damped Gauss-Newton over
// axis-angle (+) translation perturbations about the current estimate.

#ifndef MOSAIC_JOINT_REFINEMENT_HPP
#define MOSAIC_JOINT_REFINEMENT_HPP

#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/pose_graph.hpp"

namespace mosaic {

struct RefineConfig {
    double gamma = 0.09;  // truncation threshold on the edge RMSE, meters
    int max_iters = 50;
    double step_tolerance = 1e-10;
    double parameter_damping = 1e-6;  // initial lambda
};

struct RefineResult {
    std::vector<RigidTransform> poses;
    bool converged = true;
    int iterations = 0;
    double final_loss = 0.0;
};

/// RMSE of the edge's correspondences under the relative transform the given
/// global poses imply: sqrt(mean ||(T_i^{-1} T_j)(q) - p||^2).
inline double edge_residual(const Edge& edge, const RigidTransform& pose_i,
                            const RigidTransform& pose_j) {
    if (edge.correspondences.empty())
        throw EmptyCorrespondences("edge_residual: edge has no correspondences");
    const RigidTransform rel = relative_from_global(pose_i, pose_j);
    double sum = 0.0;
    for (std::size_t k = 0; k < edge.correspondences.size(); ++k)
        sum += (rel(edge.correspondences.points_j[k]) - edge.correspondences.points_i[k])
                   .squaredNorm();
    return std::sqrt(sum / double(edge.correspondences.size()));
}

/// L = sum over edges of min(edge RMSE, gamma).
inline double refinement_loss(const PoseGraph& graph, const std::vector<RigidTransform>& poses,
                              double gamma) {
    double loss = 0.0;
    for (const Edge& e : graph.edges)
        loss += std::min(edge_residual(e, poses[e.i], poses[e.j]), gamma);
    return loss;
}

/// Edges whose RMSE is strictly below gamma at the given poses; the others
/// sit on the flat part of the loss and get the subgradient 0.
inline std::vector<int> active_edges(const PoseGraph& graph,
                                     const std::vector<RigidTransform>& poses, double gamma) {
    std::vector<int> active;
    for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const Edge& e = graph.edges[k];
        if (edge_residual(e, poses[e.i], poses[e.j]) < gamma)
            active.push_back(static_cast<int>(k));
    }
    return active;
}

namespace detail {

inline std::size_t count_pairs(const PoseGraph& graph, const std::vector<int>& active) {
    std::size_t rows = 0;
    for (int k : active) rows += graph.edges[k].correspondences.size();
    return rows;
}

}  // namespace detail

/// Stacked residuals of the active edges, each pair scaled by 1/sqrt(|C_e|)
/// so the squared norm equals sum_e eps_e^2.
inline Eigen::VectorXd refinement_residual_vector(const PoseGraph& graph,
                                                  const std::vector<RigidTransform>& poses,
                                                  const std::vector<int>& active) {
    Eigen::VectorXd r(3 * detail::count_pairs(graph, active));
    std::size_t row = 0;
    for (int k : active) {
        const Edge& e = graph.edges[k];
        const RigidTransform rel = relative_from_global(poses[e.i], poses[e.j]);
        const double scale = 1.0 / std::sqrt(double(e.correspondences.size()));
        for (std::size_t c = 0; c < e.correspondences.size(); ++c) {
            r.segment<3>(3 * row++) =
                scale * (rel(e.correspondences.points_j[c]) - e.correspondences.points_i[c]);
        }
    }
    return r;
}

/// Analytic Jacobian of refinement_residual_vector w.r.t. per-vertex
/// right-perturbations (axis-angle omega, then delta-t), 6 columns per
/// vertex, anchor included (the solver masks it out).
inline Eigen::MatrixXd refinement_jacobian(const PoseGraph& graph,
                                           const std::vector<RigidTransform>& poses,
                                           const std::vector<int>& active) {
    const std::size_t n = poses.size();
    Eigen::MatrixXd J =
        Eigen::MatrixXd::Zero(3 * detail::count_pairs(graph, active), 6 * n);
    std::size_t row = 0;
    for (int k : active) {
        const Edge& e = graph.edges[k];
        const Mat3 RiT = poses[e.i].R.transpose();
        const Mat3 RiT_Rj = RiT * poses[e.j].R;
        const double scale = 1.0 / std::sqrt(double(e.correspondences.size()));
        for (std::size_t c = 0; c < e.correspondences.size(); ++c) {
            const Vec3& q = e.correspondences.points_j[c];
            // v = R_j q + t_j - t_i in world; residual = R_i^T v - p.
            const Vec3 v = poses[e.j].R * q + poses[e.j].t - poses[e.i].t;
            J.block<3, 3>(3 * row, 6 * e.i + 0) = scale * skew(RiT * v);
            J.block<3, 3>(3 * row, 6 * e.i + 3) = -scale * RiT;
            J.block<3, 3>(3 * row, 6 * e.j + 0) = -scale * RiT_Rj * skew(q);
            J.block<3, 3>(3 * row, 6 * e.j + 3) = scale * RiT;
            ++row;
        }
    }
    return J;
}

/// Damped Gauss-Newton on the smooth (squared) part of the truncated loss.
/// Steps are accepted only when the true loss L does not increase, so L is
/// non-increasing over accepted iterations by construction. Starting at a
/// minimum leaves the poses untouched.
inline RefineResult refine_poses(const PoseGraph& graph,
                                 const std::vector<RigidTransform>& initial,
                                 const RefineConfig& cfg) {
    if (initial.size() != graph.vertices.size())
        throw LengthMismatch("refine_poses: poses/vertices mismatch");
    if (!(cfg.gamma > 0.0)) throw InvalidParameter("refine_poses: gamma must be > 0");
    const int n = static_cast<int>(graph.vertices.size());

    {
        const auto components = detail::connected_components(n, graph.edges);
        if (components.size() > 1)
            throw DisconnectedGraph("refine_poses: graph is not connected");
    }

    int anchor = 0;
    for (int v = 0; v < n; ++v)
        if (graph.vertices[v].fixed) anchor = v;

    RefineResult result;
    result.poses = initial;
    std::vector<RigidTransform>& poses = result.poses;

    std::vector<int> param_of(n, -1);
    int n_free = 0;
    for (int v = 0; v < n; ++v)
        if (v != anchor) param_of[v] = 6 * n_free++;

    double loss = refinement_loss(graph, poses, cfg.gamma);
    double lambda = cfg.parameter_damping;
    bool converged = false;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const std::vector<int> active = active_edges(graph, poses, cfg.gamma);
        if (active.empty()) {
            converged = true;  // fully truncated: flat everywhere
            break;
        }
        const Eigen::VectorXd r = refinement_residual_vector(graph, poses, active);
        const Eigen::MatrixXd Jfull = refinement_jacobian(graph, poses, active);

        // Drop the anchor's 6 columns.
        Eigen::MatrixXd J(Jfull.rows(), 6 * n_free);
        for (int v = 0; v < n; ++v)
            if (param_of[v] >= 0) J.middleCols<6>(param_of[v]) = Jfull.middleCols<6>(6 * v);

        const Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < 1e-14 * std::max(1.0, loss)) {
            converged = true;
            result.iterations = iter;
            break;
        }
        const Eigen::MatrixXd H = J.transpose() * J;

        bool accepted = false;
        double step_norm = 0.0;
        while (lambda < 1e14) {
            Eigen::MatrixXd damped = H;
            damped.diagonal().array() += lambda;
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);

            std::vector<RigidTransform> trial = poses;
            for (int v = 0; v < n; ++v) {
                if (param_of[v] < 0) continue;
                const Vec3 omega = delta.segment<3>(param_of[v]);
                const Vec3 dt = delta.segment<3>(param_of[v] + 3);
                trial[v].R = project_to_so3(trial[v].R * exp_so3(omega));
                trial[v].t += dt;
            }
            const double trial_loss = refinement_loss(graph, trial, cfg.gamma);
            if (trial_loss <= loss) {
                poses = trial;
                loss = trial_loss;
                lambda *= 0.5;
                accepted = true;
                step_norm = delta.lpNorm<Eigen::Infinity>();
                break;
            }
            lambda *= 10.0;
        }
        result.iterations = iter + 1;
        if (!accepted) {
            converged = true;  // no improving step exists along GN directions
            break;
        }
        if (step_norm < cfg.step_tolerance) {
            converged = true;
            break;
        }
    }

    result.converged = converged;
    result.final_loss = loss;
    return result;
}

}  // namespace mosaic

#endif  // MOSAIC_JOINT_REFINEMENT_HPP
