// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Rigid-body math shared by every solver: rotations stored as 3x3 matrices,
// axis-angle exp/log maps, transform composition, and weighted rigid fitting.

#ifndef MOSAIC_GEOMETRY_HPP
#define MOSAIC_GEOMETRY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mosaic/errors.hpp"

namespace mosaic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rotations are plain 3x3 orthonormal matrices with det = +1. Tangent-space
// steps use axis-angle vectors in so(3); matrices avoid the quaternion sign
// ambiguity in file I/O.
using Rotation = Mat3;

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

/// Rodrigues formula: so(3) axis-angle vector -> rotation matrix.
inline Rotation exp_so3(const Vec3& w) {
    const double theta2 = w.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 W = skew(w);
    double a, b;
    if (theta < 1e-8) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat3::Identity() + a * W + b * W * W;
}

/// Matrix logarithm on SO(3). Stable for angles up to and including pi;
/// at exactly pi the axis sign is chosen deterministically.
inline Vec3 log_so3(const Rotation& R) {
    const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    // sin(theta) measured from the skew part keeps the scale well-conditioned
    // near pi, where recovering it from acos(trace) loses four digits.
    const double sin_theta = 0.5 * w.norm();
    const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
    const double theta = std::atan2(sin_theta, cos_theta);
    if (theta < 1e-6) {
        // theta/(2 sin theta) ~ 1/2 + theta^2/12
        return (0.5 + theta * theta / 12.0) * w;
    }
    if (theta < M_PI - 1e-6) {
        return (theta / (2.0 * sin_theta)) * w;
    }
    // Near pi the skew part vanishes; recover the axis from R + I.
    const Mat3 A = 0.5 * (R + Mat3::Identity());
    int k = 0;
    A.diagonal().maxCoeff(&k);
    Vec3 axis = A.col(k) / std::sqrt(std::max(A(k, k), 1e-16));
    axis.normalize();
    if (axis.dot(w) < 0.0) axis = -axis;
    return theta * axis;
}

/// Nearest rotation in Frobenius norm (polar projection, det corrected).
inline Rotation project_to_so3(const Mat3& M) {
    Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0.0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        R = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return R;
}

inline bool is_rotation(const Mat3& R, double tol = 1e-9) {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
}

/// Geodesic distance on SO(3) in radians, in [0, pi]. Symmetric. Uses
/// atan2 of the skew and trace parts so tiny angles are not flattened to
/// the acos resolution floor (~1.5e-8).
inline double rotation_geodesic_angle(const Rotation& a, const Rotation& b) {
    const Mat3 R = a * b.transpose();
    const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
    return std::atan2(0.5 * w.norm(), cos_theta);
}

/// Rigid transform x -> R x + t. Vertex poses map their frame into the
/// global frame; edge measurements store the pose of frame j in frame i.
struct RigidTransform {
    Rotation R = Rotation::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return R * x + t; }
    Vec3 operator()(const Vec3& x) const { return apply(x); }

    static RigidTransform identity() { return {}; }
};

/// (a o b): x -> a.R (b.R x + b.t) + a.t
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.R * b.R, a.R * b.t + a.t};
}

inline RigidTransform inverse(const RigidTransform& T) {
    return {T.R.transpose(), -(T.R.transpose() * T.t)};
}

/// Relative measurement implied by two global poses: the pose of frame j
/// expressed in frame i, i.e. T_i^{-1} o T_j = (R_i^T R_j, R_i^T (t_j - t_i)).
inline RigidTransform relative_from_global(const RigidTransform& pose_i,
                                           const RigidTransform& pose_j) {
    return compose(inverse(pose_i), pose_j);
}

/// Inverse of relative_from_global: pose_j = pose_i o relative.
inline RigidTransform chain_pose(const RigidTransform& pose_i, const RigidTransform& relative) {
    return compose(pose_i, relative);
}

/// Weighted least-squares rigid fit (Kabsch/Umeyama): minimizes
/// sum_i w_i ||R src_i + t - dst_i||^2. Reflections are corrected by flipping
/// the sign of the last singular vector.
///
/// Throws DegenerateGeometry when fewer than 3 points are given or the points
/// are coincident/collinear (second singular value below 1e-9 relative).
inline RigidTransform fit_rigid_svd(std::span<const Vec3> src, std::span<const Vec3> dst,
                                    std::span<const double> weights = {}) {
    if (src.size() != dst.size()) throw LengthMismatch("fit_rigid_svd: size mismatch");
    if (!weights.empty() && weights.size() != src.size())
        throw LengthMismatch("fit_rigid_svd: weight size mismatch");
    if (src.size() < 3) throw DegenerateGeometry("fit_rigid_svd: need at least 3 points");

    double wsum = 0.0;
    Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0) throw InvalidParameter("fit_rigid_svd: negative weight");
        cs += w * src[i];
        cd += w * dst[i];
        wsum += w;
    }
    if (wsum <= 0.0) throw DegenerateGeometry("fit_rigid_svd: zero total weight");
    cs /= wsum;
    cd /= wsum;

    Mat3 H = Mat3::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        H += w * (src[i] - cs) * (dst[i] - cd).transpose();
    }

    Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    if (sv(1) <= 1e-9 * std::max(sv(0), 1e-300))
        throw DegenerateGeometry("fit_rigid_svd: collinear or coincident points");

    Mat3 D = Mat3::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
    const Rotation R = svd.matrixV() * D * svd.matrixU().transpose();
    return {R, cd - R * cs};
}

}  // namespace mosaic

#endif  // MOSAIC_GEOMETRY_HPP
