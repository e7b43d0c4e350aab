#include "mosaic/geometry.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "mosaic/random.hpp"
#include "test_util.hpp"

using namespace mosaic;
using namespace mosaic::test;

TEST_CASE("compose: identity cases") {
    const RigidTransform id = RigidTransform::identity();
    CHECK(transform_diff(compose(id, id), id) == 0.0);

    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
        const RigidTransform T = random_pose(rng);
        CHECK(transform_diff(compose(T, inverse(T)), id) < 1e-9);
        CHECK(transform_diff(compose(inverse(T), T), id) < 1e-9);
    }
}

TEST_CASE("compose: hand-computed Rz(90) example") {
    // (Rz(90deg), [1,0,0]) applied to [1,0,0]:
    // Rz90*[1,0,0] = [0,1,0], plus [1,0,0] -> [1,1,0].
    const RigidTransform T{rot_z(M_PI / 2.0), Vec3(1, 0, 0)};
    const Vec3 mapped = T(Vec3(1, 0, 0));
    CHECK(mapped.x() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mapped.y() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(mapped.z()) < 1e-12);
}

TEST_CASE("compose matches sequential application on random points") {
    Rng rng(12);
    for (int k = 0; k < 20; ++k) {
        const RigidTransform a = random_pose(rng);
        const RigidTransform b = random_pose(rng);
        const RigidTransform ab = compose(a, b);
        const Vec3 x = rng.normal_vec3();
        CHECK((ab(x) - a(b(x))).norm() < 1e-12);
    }
}

TEST_CASE("relative_from_global: trivial cases") {
    Rng rng(13);
    const RigidTransform T = random_pose(rng);
    CHECK(transform_diff(relative_from_global(T, T), RigidTransform::identity()) < 1e-12);

    const RigidTransform id = RigidTransform::identity();
    const RigidTransform Tj{Rotation::Identity(), Vec3(1, 2, 3)};
    const RigidTransform rel = relative_from_global(id, Tj);
    CHECK(max_abs_diff(rel.R, Rotation::Identity()) < 1e-15);
    CHECK((rel.t - Vec3(1, 2, 3)).norm() < 1e-15);
}

TEST_CASE("relative_from_global: point-mapping oracle on random pose pairs") {
    Rng rng(14);
    for (int k = 0; k < 10; ++k) {
        const RigidTransform Ti = random_pose(rng);
        const RigidTransform Tj = random_pose(rng);
        const RigidTransform rel = relative_from_global(Ti, Tj);
        // rel is the pose of frame j in frame i: it must map frame-j
        // coordinates of any world point to its frame-i coordinates.
        for (int p = 0; p < 10; ++p) {
            const Vec3 w = rng.normal_vec3(2.0);
            const Vec3 in_i = inverse(Ti)(w);
            const Vec3 in_j = inverse(Tj)(w);
            CHECK((rel(in_j) - in_i).norm() < 1e-9);
        }
        // Component formulas, by independent arithmetic.
        CHECK(max_abs_diff(rel.R, Ti.R.transpose() * Tj.R) < 1e-12);
        CHECK((rel.t - Ti.R.transpose() * (Tj.t - Ti.t)).norm() < 1e-12);
    }
}

TEST_CASE("relative_from_global then chain_pose reproduces pose_j") {
    Rng rng(15);
    for (int k = 0; k < 50; ++k) {
        const RigidTransform Ti = random_pose(rng);
        const RigidTransform Tj = random_pose(rng);
        const RigidTransform rebuilt = chain_pose(Ti, relative_from_global(Ti, Tj));
        CHECK(transform_diff(rebuilt, Tj) < 1e-9);
    }
}

TEST_CASE("rotation_geodesic_angle: pinned values") {
    CHECK(rotation_geodesic_angle(Rotation::Identity(), Rotation::Identity()) == 0.0);
    CHECK(rotation_geodesic_angle(Rotation::Identity(), rot_x(M_PI)) ==
          doctest::Approx(M_PI).epsilon(1e-12));
    // Angles about a common axis subtract.
    const double angle = rotation_geodesic_angle(rot_z(10.0 * M_PI / 180.0),
                                                 rot_z(25.0 * M_PI / 180.0));
    CHECK(std::abs(angle - 15.0 * M_PI / 180.0) < 1e-9);
}

TEST_CASE("rotation_geodesic_angle: symmetry and triangle inequality") {
    Rng rng(16);
    for (int k = 0; k < 100; ++k) {
        const Rotation a = rng.rotation();
        const Rotation b = rng.rotation();
        const Rotation c = rng.rotation();
        CHECK(std::abs(rotation_geodesic_angle(a, b) - rotation_geodesic_angle(b, a)) < 1e-12);
        CHECK(rotation_geodesic_angle(a, c) <=
              rotation_geodesic_angle(a, b) + rotation_geodesic_angle(b, c) + 1e-9);
    }
}

TEST_CASE("exp/log round trip below pi") {
    Rng rng(17);
    for (int k = 0; k < 200; ++k) {
        // Cover tiny angles and angles just below pi.
        double angle;
        if (k % 3 == 0)
            angle = rng.uniform(0.0, 1e-6);
        else if (k % 3 == 1)
            angle = rng.uniform(0.0, M_PI - 1e-6);
        else
            angle = M_PI - 1e-6 - rng.uniform(0.0, 1e-7);
        const Vec3 w = angle * rng.unit_vec3();
        const Vec3 back = log_so3(exp_so3(w));
        CHECK((back - w).norm() < 1e-8);
    }
}

TEST_CASE("log_so3 handles rotations at pi") {
    const Vec3 w = log_so3(rot_x(M_PI));
    CHECK(std::abs(w.norm() - M_PI) < 1e-9);
    CHECK(max_abs_diff(exp_so3(w), rot_x(M_PI)) < 1e-9);
}

TEST_CASE("project_to_so3 returns valid rotations") {
    Rng rng(18);
    for (int k = 0; k < 50; ++k) {
        Mat3 M = rng.rotation();
        M += 0.05 * Mat3::Random();
        const Rotation R = project_to_so3(M);
        CHECK(is_rotation(R, 1e-9));
    }
}

TEST_CASE("fit_rigid_svd: exact recovery") {
    Rng rng(19);
    std::vector<Vec3> src;
    for (int k = 0; k < 12; ++k) src.push_back(rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1)));

    SUBCASE("src == dst gives identity") {
        const RigidTransform T = fit_rigid_svd(src, src);
        CHECK(transform_diff(T, RigidTransform::identity()) < 1e-12);
    }

    SUBCASE("noiseless model recovered exactly") {
        const RigidTransform truth{rot_z(M_PI / 2.0), Vec3(0, 0, 1)};
        std::vector<Vec3> dst;
        for (const Vec3& p : src) dst.push_back(truth(p));
        const RigidTransform T = fit_rigid_svd(src, dst);
        CHECK(transform_diff(T, truth) < 1e-9);
    }
}

TEST_CASE("fit_rigid_svd: Monte-Carlo noise bound") {
    Rng rng(20);
    const RigidTransform truth{rng.rotation(), Vec3(0.3, -0.2, 0.5)};
    std::vector<Vec3> src, dst;
    const double sigma = 0.01;
    for (int k = 0; k < 100; ++k) {
        const Vec3 p = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
        src.push_back(p);
        dst.push_back(truth(p) + rng.normal_vec3(sigma));
    }
    const RigidTransform T = fit_rigid_svd(src, dst);
    double rmse = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) rmse += (T(src[k]) - dst[k]).squaredNorm();
    rmse = std::sqrt(rmse / src.size());
    CHECK(rmse <= 0.02);  // ~2 sigma; 3-sigma margin checked empirically
    CHECK(rotation_geodesic_angle(T.R, truth.R) < 1.0 * M_PI / 180.0);
}

TEST_CASE("fit_rigid_svd: weights repeat points") {
    Rng rng(21);
    const RigidTransform truth{rng.rotation(0.5), Vec3(0.1, 0.2, 0.3)};
    std::vector<Vec3> src, dst;
    for (int k = 0; k < 8; ++k) {
        const Vec3 p = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
        src.push_back(p);
        dst.push_back(truth(p));
    }
    // Perturb one destination; with weight 0 on it the fit is still exact.
    dst[3] += Vec3(0.5, 0, 0);
    std::vector<double> w(src.size(), 1.0);
    w[3] = 0.0;
    const RigidTransform T = fit_rigid_svd(src, dst, w);
    CHECK(transform_diff(T, truth) < 1e-9);
}

TEST_CASE("fit_rigid_svd: invariance to a common rigid motion") {
    Rng rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Vec3> src, dst;
        for (int k = 0; k < 30; ++k) {
            src.push_back(rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1)));
            dst.push_back(rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1)));
        }
        const RigidTransform fit = fit_rigid_svd(src, dst);
        double res_a = 0.0;
        for (std::size_t k = 0; k < src.size(); ++k)
            res_a += (fit(src[k]) - dst[k]).squaredNorm();

        const RigidTransform G = random_pose(rng);
        std::vector<Vec3> src_g, dst_g;
        for (std::size_t k = 0; k < src.size(); ++k) {
            src_g.push_back(G(src[k]));
            dst_g.push_back(G(dst[k]));
        }
        const RigidTransform fit_g = fit_rigid_svd(src_g, dst_g);
        double res_b = 0.0;
        for (std::size_t k = 0; k < src.size(); ++k)
            res_b += (fit_g(src_g[k]) - dst_g[k]).squaredNorm();
        CHECK(std::abs(res_a - res_b) < 1e-7);
    }
}

TEST_CASE("fit_rigid_svd: degenerate inputs throw") {
    std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
    CHECK_THROWS_AS(fit_rigid_svd(line, line), DegenerateGeometry);

    std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    CHECK_THROWS_AS(fit_rigid_svd(two, two), DegenerateGeometry);

    std::vector<Vec3> same(5, Vec3(0.5, 0.5, 0.5));
    CHECK_THROWS_AS(fit_rigid_svd(same, same), DegenerateGeometry);
}
