#include "mosaic/consensus.hpp"

#include <algorithm>
#include <set>

#include "doctest.h"
#include "mosaic/pairwise.hpp"
#include "test_util.hpp"

using namespace mosaic;
using namespace mosaic::test;

namespace {

SphereSet random_instance(Rng& rng, int n, double eps, double box = 1.0) {
    SphereSet s;
    s.radius = eps;
    const Vec3 cluster = rng.uniform_in_box(Vec3::Constant(-box / 2), Vec3::Constant(box / 2));
    for (int k = 0; k < n; ++k) {
        if (rng.uniform() < 0.4)
            s.centers.push_back(cluster + rng.normal_vec3(0.6 * eps));
        else
            s.centers.push_back(rng.uniform_in_box(Vec3::Constant(-box), Vec3::Constant(box)));
    }
    return s;
}

int count_at(const SphereSet& s, const Vec3& t) {
    int count = 0;
    for (const Vec3& c : s.centers)
        if ((c - t).squaredNorm() < s.radius * s.radius) ++count;
    return count;
}

/// Brute-force grid scan over the inflated bounding box at the given pitch;
/// returns the best inlier count found on the lattice.
int grid_scan_best_count(const SphereSet& s, double pitch) {
    Vec3 lo = s.centers[0], hi = s.centers[0];
    for (const Vec3& c : s.centers) {
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
    }
    lo -= Vec3::Constant(s.radius);
    hi += Vec3::Constant(s.radius);
    int best = 0;
    for (double x = lo.x(); x <= hi.x(); x += pitch)
        for (double y = lo.y(); y <= hi.y(); y += pitch)
            for (double z = lo.z(); z <= hi.z(); z += pitch) {
                const int count = count_at(s, Vec3(x, y, z));
                best = std::max(best, count);
            }
    return best;
}

}  // namespace

TEST_CASE("candidate_translations: pinned and oracle cases") {
    SUBCASE("identity rotations, equal points give zero") {
        CorrespondenceSet corr;
        corr.add(Vec3(1, 2, 3), Vec3(1, 2, 3));
        const auto c = candidate_translations(corr, Rotation::Identity(), Rotation::Identity());
        CHECK(c[0].norm() == 0.0);
    }

    SUBCASE("noiseless scene pair equals the true t_i - t_j") {
        const SceneBundle bundle = generate_scene(4, 20, 0.7, 0.0, 0.0, 5);
        for (const Edge& e : bundle.graph.edges) {
            const RigidTransform& Ti = bundle.truth_poses[e.i];
            const RigidTransform& Tj = bundle.truth_poses[e.j];
            const auto candidates = candidate_translations(e.correspondences, Ti.R, Tj.R);
            const Vec3 expected = Ti.t - Tj.t;
            for (const Vec3& c : candidates) CHECK((c - expected).norm() < 1e-12);
        }
    }

    SUBCASE("random inputs match per-component arithmetic") {
        Rng rng(61);
        for (int trial = 0; trial < 20; ++trial) {
            CorrespondenceSet corr;
            corr.add(rng.normal_vec3(), rng.normal_vec3());
            const Rotation Ri = rng.rotation(), Rj = rng.rotation();
            const Vec3 got = candidate_translations(corr, Ri, Rj)[0];
            const Vec3& p = corr.points_i[0];
            const Vec3& q = corr.points_j[0];
            for (int a = 0; a < 3; ++a) {
                const double expect = Rj(a, 0) * q.x() + Rj(a, 1) * q.y() + Rj(a, 2) * q.z() -
                                      (Ri(a, 0) * p.x() + Ri(a, 1) * p.y() + Ri(a, 2) * p.z());
                CHECK(std::abs(got[a] - expect) < 1e-12);
            }
        }
    }

    SUBCASE("empty set throws") {
        CHECK_THROWS_AS(candidate_translations({}, Rotation::Identity(), Rotation::Identity()),
                        EmptyCorrespondences);
    }
}

TEST_CASE("max_consensus_translation: single candidate") {
    SphereSet s;
    s.radius = 0.1;
    s.centers.push_back(Vec3(0.3, -0.2, 0.8));
    const ConsensusResult r = max_consensus_translation(s);
    CHECK(r.inlier_count == 1);
    CHECK((r.translation - s.centers[0]).norm() < 1e-12);
    CHECK(r.inlier_indices == std::vector<int>{0});
    CHECK(r.converged);
}

TEST_CASE("max_consensus_translation: coincident cluster beats scattered singles") {
    SphereSet s;
    s.radius = 0.05;
    const Vec3 spot(0.4, 0.1, -0.3);
    for (int k = 0; k < 10; ++k) s.centers.push_back(spot);
    // 5 singles in distinct clusters far beyond 2 eps.
    for (int k = 0; k < 5; ++k)
        s.centers.push_back(spot + Vec3(1.0 + 0.5 * k, 0.7 * k, -0.4 * k));
    const ConsensusResult r = max_consensus_translation(s);
    CHECK(r.inlier_count == 10);
    CHECK((r.translation - spot).norm() < 1e-12);
    for (int idx : r.inlier_indices) CHECK(idx < 10);
}

TEST_CASE("max_consensus_translation: validation") {
    SphereSet s;
    s.centers.push_back(Vec3::Zero());
    s.radius = 0.0;
    CHECK_THROWS_AS(max_consensus_translation(s), InvalidParameter);
    s.radius = 0.1;
    s.centers.clear();
    CHECK_THROWS_AS(max_consensus_translation(s), EmptyInput);
}

TEST_CASE("dominance over the exhaustive oracle (100 seeded instances)") {
    Rng rng(62);
    for (int trial = 0; trial < 100; ++trial) {
        const SphereSet s = random_instance(rng, 200, 0.1);
        const ConsensusResult bnb = max_consensus_translation(s);
        const ConsensusResult oracle = exhaustive_candidate_oracle(s);
        CHECK(bnb.converged);
        CHECK(bnb.inlier_count >= oracle.inlier_count);
    }
}

TEST_CASE("fine-grid optimality on small instances") {
    // Compact consensus-shaped instances: the optimal region is wide enough
    // for the eps/50 lattice to hit, and the scan box stays tractable.
    Rng rng(63);
    for (int trial = 0; trial < 25; ++trial) {
        const double eps = rng.uniform(0.05, 0.2);
        SphereSet s;
        s.radius = eps;
        const int n = 3 + int(rng.index(28));
        for (int k = 0; k < n; ++k)
            s.centers.push_back(rng.normal_vec3(0.3 * eps)
                                    .cwiseMax(Vec3::Constant(-0.5 * eps))
                                    .cwiseMin(Vec3::Constant(0.5 * eps)));
        const ConsensusResult bnb = max_consensus_translation(s);
        REQUIRE(bnb.converged);
        const int scanned = grid_scan_best_count(s, eps / 50.0);
        CHECK(bnb.inlier_count == scanned);
    }
}

TEST_CASE("reported count is achieved at the certified point; refit is the mean") {
    Rng rng(64);
    for (int trial = 0; trial < 50; ++trial) {
        const SphereSet s = random_instance(rng, 80, rng.uniform(0.02, 0.3));
        const ConsensusResult r = max_consensus_translation(s);
        CHECK(count_at(s, r.certified_point) == r.inlier_count);
        CHECK(int(r.inlier_indices.size()) == r.inlier_count);
        Vec3 mean = Vec3::Zero();
        for (int idx : r.inlier_indices) {
            CHECK((s.centers[idx] - r.certified_point).norm() <= s.radius + 1e-9);
            mean += s.centers[idx];
        }
        mean /= double(r.inlier_indices.size());
        CHECK((r.translation - mean).norm() == 0.0);
    }
}

TEST_CASE("translation-offset equivariance") {
    Rng rng(65);
    for (int trial = 0; trial < 20; ++trial) {
        const SphereSet s = random_instance(rng, 120, 0.08);
        const Vec3 offset = rng.normal_vec3(3.0);
        SphereSet shifted = s;
        for (Vec3& c : shifted.centers) c += offset;
        const ConsensusResult a = max_consensus_translation(s);
        const ConsensusResult b = max_consensus_translation(shifted);
        CHECK(a.inlier_count == b.inlier_count);
        CHECK(a.inlier_indices == b.inlier_indices);
        CHECK((b.translation - (a.translation + offset)).norm() < 1e-9);
    }
}

TEST_CASE("box-sphere classification: sampling + duplicate-formula oracle") {
    Rng rng(66);
    int outside_cases = 0, contained_cases = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const Vec3 lo = rng.uniform_in_box(Vec3::Constant(-1), Vec3::Constant(1));
        const Vec3 size(rng.uniform(0.01, 0.4), rng.uniform(0.01, 0.4), rng.uniform(0.01, 0.4));
        const Vec3 hi = lo + size;
        // Mix of sphere centers near the box and far away so all three
        // categories appear often.
        const Vec3 center = trial % 2 ? Vec3(lo + 0.5 * size + rng.normal_vec3(0.3))
                                      : rng.uniform_in_box(Vec3::Constant(-1.5), Vec3::Constant(1.5));
        const double eps = rng.uniform(0.1, 0.9);

        const auto d = mosaic::detail::box_sphere_distances(lo, hi, center);

        // Independent arithmetic for the two distances.
        double dmin2 = 0.0, dmax2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            double nearest = center[a];
            if (nearest < lo[a]) nearest = lo[a];
            if (nearest > hi[a]) nearest = hi[a];
            dmin2 += (center[a] - nearest) * (center[a] - nearest);
            const double to_lo = std::abs(center[a] - lo[a]);
            const double to_hi = std::abs(center[a] - hi[a]);
            const double far = std::max(to_lo, to_hi);
            dmax2 += far * far;
        }
        CHECK(std::abs(d.min_dist2 - dmin2) < 1e-12);
        CHECK(std::abs(d.max_dist2 - dmax2) < 1e-12);

        // Sampling oracle on a 10x10x10 lattice including all corners.
        const bool outside = d.min_dist2 > eps * eps;
        const bool contained = d.max_dist2 < eps * eps;
        if (outside || contained) {
            bool any_inside = false, all_inside = true;
            for (int x = 0; x < 10; ++x)
                for (int y = 0; y < 10; ++y)
                    for (int z = 0; z < 10; ++z) {
                        const Vec3 p = lo + Vec3(size.x() * x / 9.0, size.y() * y / 9.0,
                                                 size.z() * z / 9.0);
                        const bool inside = (p - center).norm() < eps;
                        any_inside = any_inside || inside;
                        all_inside = all_inside && inside;
                    }
            if (outside) {
                ++outside_cases;
                CHECK(!any_inside);
            }
            if (contained) {
                ++contained_cases;
                // Corners are in the lattice, and the farthest point of a box
                // is always a corner, so this check is exact.
                CHECK(all_inside);
            }
        }
    }
    CHECK(outside_cases > 100);
    CHECK(contained_cases > 100);
}

TEST_CASE("max_zoom cap returns best-so-far with a flag") {
    Rng rng(67);
    const SphereSet s = random_instance(rng, 150, 0.1);
    ConsensusConfig cfg;
    cfg.max_zoom = 1;
    const ConsensusResult r = max_consensus_translation(s, cfg);
    CHECK(!r.converged);
    CHECK(r.inlier_count >= 1);
    // The certified fallback still reports a consistent inlier set.
    for (int idx : r.inlier_indices)
        CHECK((s.centers[idx] - r.translation).norm() <= s.radius + 1e-9);
}

TEST_CASE("level stats are recorded for the cell dump") {
    Rng rng(68);
    const SphereSet s = random_instance(rng, 100, 0.1);
    const ConsensusResult r = max_consensus_translation(s);
    REQUIRE(!r.level_stats.empty());
    CHECK(r.level_stats.front().zoom_level == 0);
    std::int64_t total = 0;
    for (const auto& ls : r.level_stats) total += ls.cells;
    CHECK(total == r.cells_visited);
    CHECK(r.zoom_levels + 1 == int(r.level_stats.size()));
}

TEST_CASE("exhaustive_candidate_oracle: pinned cases") {
    SUBCASE("all identical centers") {
        SphereSet s;
        s.radius = 0.1;
        for (int k = 0; k < 7; ++k) s.centers.push_back(Vec3(1, 1, 1));
        const ConsensusResult r = exhaustive_candidate_oracle(s);
        CHECK(r.inlier_count == 7);
    }

    SUBCASE("two clusters 7 and 3, far apart") {
        SphereSet s;
        s.radius = 0.1;
        for (int k = 0; k < 7; ++k) s.centers.push_back(Vec3(0, 0, 0) + Vec3(0.001 * k, 0, 0));
        for (int k = 0; k < 3; ++k) s.centers.push_back(Vec3(1.0, 0, 0) + Vec3(0.001 * k, 0, 0));
        const ConsensusResult r = exhaustive_candidate_oracle(s);
        CHECK(r.inlier_count == 7);
        for (int idx : r.inlier_indices) CHECK(idx < 7);
    }

    SUBCASE("ties break to the lowest index") {
        SphereSet s;
        s.radius = 0.1;
        s.centers = {Vec3(0, 0, 0), Vec3(5, 0, 0)};
        const ConsensusResult r = exhaustive_candidate_oracle(s);
        CHECK(r.inlier_count == 1);
        CHECK(r.inlier_indices == std::vector<int>{0});
    }
}

TEST_CASE("reestimate_all_edges: noiseless graph translations unchanged") {
    const SceneBundle bundle = generate_scene(5, 20, 0.7, 0.0, 0.0, 71);
    std::vector<Rotation> rotations;
    for (const RigidTransform& T : bundle.truth_poses) rotations.push_back(T.R);
    const ReestimateResult out = reestimate_all_edges(bundle.graph, rotations, 0.03);
    CHECK(out.all_converged);
    for (std::size_t k = 0; k < bundle.graph.edges.size(); ++k) {
        CHECK((out.graph.edges[k].relative.t - bundle.graph.edges[k].relative.t).norm() < 1e-9);
        CHECK(max_abs_diff(out.graph.edges[k].relative.R, bundle.graph.edges[k].relative.R) <
              1e-9);
    }
}

TEST_CASE("reestimate_all_edges: 60% outliers, 3 sigma / sqrt(m) per-edge accuracy") {
    SceneConfig scfg;
    scfg.n_clouds = 6;
    scfg.points_per_cloud = 10;
    scfg.correspondences_per_pair = 250;
    scfg.noise_sigma = 0.005;
    scfg.outlier_ratio = 0.6;
    scfg.rng_seed = 79;  // seeded Monte-Carlo: the bound is deterministic per seed
    const SceneBundle bundle = generate_scene(scfg);
    std::vector<Rotation> rotations;
    for (const RigidTransform& T : bundle.truth_poses) rotations.push_back(T.R);

    const ReestimateResult out = reestimate_all_edges(bundle.graph, rotations, 0.03);
    for (std::size_t k = 0; k < out.graph.edges.size(); ++k) {
        const Edge& e = out.graph.edges[k];
        const Vec3 d_true = bundle.truth_poses[e.i].t - bundle.truth_poses[e.j].t;
        // Stored edge translation is -R_i^T d.
        const Vec3 d_est = -(rotations[e.i] * e.relative.t);
        REQUIRE(e.inlier_count >= 3);
        CHECK((d_est - d_true).norm() <= 3.0 * scfg.noise_sigma / std::sqrt(e.inlier_count));
    }
}

TEST_CASE("reestimate_all_edges: all-outlier edge gets the floor weight") {
    SceneConfig scfg;
    scfg.n_clouds = 3;
    scfg.points_per_cloud = 10;
    scfg.correspondences_per_pair = 3000;
    scfg.noise_sigma = 0.002;
    scfg.rng_seed = 73;
    SceneBundle bundle = generate_scene(scfg);
    // Degrade one edge to pure mismatches spread far beyond eps; its
    // consensus count (a couple at best) over the clean edges' thousands
    // drives the weight ratio under the 1e-3 floor.
    Rng rng(74);
    Edge& bad = bundle.graph.edges[0];
    for (std::size_t c = 0; c < bad.correspondences.size(); ++c) {
        bad.correspondences.points_i[c] = rng.uniform_in_box(Vec3::Constant(-50),
                                                             Vec3::Constant(50));
        bad.correspondences.points_j[c] = rng.uniform_in_box(Vec3::Constant(-50),
                                                             Vec3::Constant(50));
    }
    std::vector<Rotation> rotations;
    for (const RigidTransform& T : bundle.truth_poses) rotations.push_back(T.R);
    const ReestimateResult out = reestimate_all_edges(bundle.graph, rotations, 0.03);
    CHECK(out.graph.edges[0].weight == 1e-3);
    CHECK(out.graph.edges[0].inlier_count <= 3);
}

TEST_CASE("reestimate_all_edges: rotation part replaced from global rotations") {
    Rng rng(75);
    const SceneBundle bundle = generate_scene(4, 15, 0.7, 0.01, 0.2, 76);
    std::vector<Rotation> rotations;
    for (std::size_t v = 0; v < bundle.truth_poses.size(); ++v)
        rotations.push_back(rng.rotation());
    const ReestimateResult out = reestimate_all_edges(bundle.graph, rotations, 0.03);
    for (const Edge& e : out.graph.edges)
        CHECK(max_abs_diff(e.relative.R, rotations[e.i].transpose() * rotations[e.j]) < 1e-12);
    CHECK_THROWS_AS(reestimate_all_edges(bundle.graph, {}, 0.03), LengthMismatch);
}
