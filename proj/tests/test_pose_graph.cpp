#include "mosaic/pose_graph.hpp"

#include <algorithm>
#include <set>

#include "doctest.h"
#include "mosaic/random.hpp"
#include "test_util.hpp"

using namespace mosaic;
using namespace mosaic::test;

namespace {

CorrespondenceSet dummy_corr(int n = 4) {
    CorrespondenceSet c;
    for (int k = 0; k < n; ++k) c.add(Vec3(k, 0, 0), Vec3(k, 0, 0));
    return c;
}

PairwiseResult make_pair(int i, int j, const RigidTransform& rel, int inliers) {
    PairwiseResult r;
    r.i = i;
    r.j = j;
    r.relative = rel;
    r.correspondences = dummy_corr(std::max(inliers, 4));
    r.inlier_count = inliers;
    return r;
}

/// Graph whose edges are generated exactly from a set of ground-truth poses.
PoseGraph exact_graph(const std::vector<RigidTransform>& poses,
                      const std::vector<std::pair<int, int>>& pairs) {
    std::vector<PairwiseResult> results;
    for (auto [i, j] : pairs)
        results.push_back(make_pair(i, j, relative_from_global(poses[i], poses[j]), 10));
    return build_graph(results);
}

}  // namespace

TEST_CASE("build_graph: two vertices, one edge") {
    const RigidTransform rel{Rotation::Identity(), Vec3(1, 0, 0)};
    const PoseGraph g = build_graph({make_pair(0, 1, rel, 5)});
    REQUIRE(g.vertices.size() == 2);
    CHECK(g.vertices[0].fixed);
    CHECK(!g.vertices[1].fixed);
    CHECK(transform_diff(g.vertices[0].pose, RigidTransform::identity()) == 0.0);
    const auto residuals = consistency_residuals(g);
    CHECK(residuals[0].rotation_angle < 1e-9);
    CHECK(residuals[0].translation_norm < 1e-9);
    CHECK(validate(g).empty());
}

TEST_CASE("build_graph: chain of identity edges keeps all poses identity") {
    std::vector<PairwiseResult> results;
    for (int i = 0; i < 4; ++i)
        results.push_back(make_pair(i, i + 1, RigidTransform::identity(), 8));
    const PoseGraph g = build_graph(results);
    for (const Vertex& v : g.vertices)
        CHECK(transform_diff(v.pose, RigidTransform::identity()) < 1e-15);
}

TEST_CASE("build_graph: spanning tree avoids the weakest corrupted edge") {
    Rng rng(31);
    std::vector<RigidTransform> truth = {RigidTransform::identity(), random_pose(rng),
                                         random_pose(rng)};
    // Triangle; edge (0,2) carries a corrupted transform and the lowest
    // inlier count.
    std::vector<PairwiseResult> results;
    results.push_back(make_pair(0, 1, relative_from_global(truth[0], truth[1]), 20));
    results.push_back(make_pair(1, 2, relative_from_global(truth[1], truth[2]), 15));
    results.push_back(make_pair(0, 2, random_pose(rng), 3));
    const PoseGraph g = build_graph(results);

    // Oracle: enumerate the three spanning trees of the triangle and pick the
    // max total inlier count; it is {01, 12} with 35.
    struct Tree {
        std::set<int> edges;
        int weight;
    };
    std::vector<Tree> trees = {{{0, 1}, 35}, {{0, 2}, 23}, {{1, 2}, 18}};
    const Tree* best = &trees[0];
    for (const Tree& t : trees)
        if (t.weight > best->weight) best = &t;
    CHECK(best->edges == std::set<int>({0, 1}));

    // Chaining along {01, 12} reproduces the truth poses exactly; the
    // corrupted edge cannot have been used.
    for (int v = 0; v < 3; ++v) CHECK(transform_diff(g.vertices[v].pose, truth[v]) < 1e-9);
}

TEST_CASE("build_graph: error cases") {
    CHECK_THROWS_AS(build_graph({}), EmptyInput);
    CHECK_THROWS_AS(build_graph({make_pair(0, 0, RigidTransform::identity(), 5)}),
                    InvalidParameter);
    // Two separate components.
    std::vector<PairwiseResult> split = {
        make_pair(0, 1, RigidTransform::identity(), 5),
        make_pair(2, 3, RigidTransform::identity(), 5),
    };
    CHECK_THROWS_AS(build_graph(split), DisconnectedGraph);
    try {
        build_graph(split);
    } catch (const DisconnectedGraph& e) {
        const std::string msg = e.what();
        CHECK(msg.find("{0,1}") != std::string::npos);
        CHECK(msg.find("{2,3}") != std::string::npos);
    }
    // Duplicate unordered pair.
    std::vector<PairwiseResult> dup = {
        make_pair(0, 1, RigidTransform::identity(), 5),
        make_pair(1, 0, RigidTransform::identity(), 5),
    };
    CHECK_THROWS_AS(build_graph(dup), InvalidParameter);
}

TEST_CASE("build_graph: non-dense ids are compacted") {
    std::vector<PairwiseResult> results = {
        make_pair(3, 7, RigidTransform::identity(), 5),
        make_pair(7, 12, RigidTransform::identity(), 5),
    };
    const PoseGraph g = build_graph(results);
    REQUIRE(g.vertices.size() == 3);
    CHECK(validate(g).empty());
}

TEST_CASE("validate: violation reporting") {
    Rng rng(32);
    std::vector<RigidTransform> poses = {RigidTransform::identity(), random_pose(rng),
                                         random_pose(rng)};
    PoseGraph g = exact_graph(poses, {{0, 1}, {1, 2}});
    CHECK(validate(g).empty());

    SUBCASE("duplicate edge, both orientations") {
        Edge dup = g.edges[1];
        std::swap(dup.i, dup.j);
        dup.relative = inverse(dup.relative);
        g.edges.push_back(dup);
        const auto violations = validate(g);
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].code == Violation::Code::DuplicateEdge);
    }

    SUBCASE("missing anchor") {
        g.vertices[0].fixed = false;
        const auto violations = validate(g);
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].code == Violation::Code::NoAnchor);
    }

    SUBCASE("two disconnected triangles, components named") {
        std::vector<RigidTransform> six(6, RigidTransform::identity());
        PoseGraph h;
        h.vertices.resize(6);
        for (int v = 0; v < 6; ++v) {
            h.vertices[v].id = v;
            h.vertices[v].fixed = (v == 0);
        }
        auto add_edge = [&](int i, int j) {
            Edge e;
            e.i = i;
            e.j = j;
            h.edges.push_back(e);
        };
        add_edge(0, 1);
        add_edge(1, 2);
        add_edge(0, 2);
        add_edge(3, 4);
        add_edge(4, 5);
        add_edge(3, 5);
        const auto violations = validate(h);
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].code == Violation::Code::DisconnectedGraph);
        // Union-find oracle: components must be exactly {0,1,2} and {3,4,5}.
        CHECK(violations[0].message.find("{0,1,2}") != std::string::npos);
        CHECK(violations[0].message.find("{3,4,5}") != std::string::npos);
    }

    SUBCASE("inlier count above correspondence count") {
        g.edges[0].inlier_count = 1000;
        const auto violations = validate(g);
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].code == Violation::Code::BadInlierCount);
    }
}

TEST_CASE("consistency_residuals: zero on exact graphs, localized after a perturbation") {
    Rng rng(33);
    std::vector<RigidTransform> poses;
    for (int v = 0; v < 5; ++v)
        poses.push_back(v == 0 ? RigidTransform::identity() : random_pose(rng));
    PoseGraph g = exact_graph(poses, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 2}, {1, 3}});

    for (const auto& r : consistency_residuals(g)) {
        CHECK(r.rotation_angle < 1e-9);
        CHECK(r.translation_norm < 1e-9);
    }

    // Perturb vertex 2 by Rz(5 deg): exactly its incident edges move, and
    // their rotation residual is exactly 5 deg.
    const double five_deg = 5.0 * M_PI / 180.0;
    g.vertices[2].pose.R = g.vertices[2].pose.R * rot_z(five_deg);
    const auto residuals = consistency_residuals(g);
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const bool incident = g.edges[k].i == 2 || g.edges[k].j == 2;
        if (incident)
            CHECK(std::abs(residuals[k].rotation_angle - five_deg) < 1e-9);
        else
            CHECK(residuals[k].rotation_angle < 1e-9);
    }
}

TEST_CASE("consistency_residuals: duplicate-formula oracle on random graphs") {
    Rng rng(34);
    for (int trial = 0; trial < 10; ++trial) {
        PoseGraph g;
        g.vertices.resize(4);
        for (int v = 0; v < 4; ++v) {
            g.vertices[v].id = v;
            g.vertices[v].fixed = (v == 0);
            g.vertices[v].pose = random_pose(rng);
        }
        for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {0, 3}}) {
            Edge e;
            e.i = i;
            e.j = j;
            e.relative = random_pose(rng);
            g.edges.push_back(e);
        }
        const auto residuals = consistency_residuals(g);
        for (std::size_t k = 0; k < g.edges.size(); ++k) {
            const Edge& e = g.edges[k];
            // Independent re-implementation of the residual formulas.
            const Mat3 Ri = g.vertices[e.i].pose.R, Rj = g.vertices[e.j].pose.R;
            const Vec3 ti = g.vertices[e.i].pose.t, tj = g.vertices[e.j].pose.t;
            const double angle =
                std::acos(std::clamp(((e.relative.R * (Ri.transpose() * Rj).transpose()).trace() -
                                      1.0) / 2.0, -1.0, 1.0));
            const Vec3 trans = e.relative.t - Ri.transpose() * (tj - ti);
            CHECK(std::abs(residuals[k].rotation_angle - angle) < 1e-12);
            CHECK(std::abs(residuals[k].translation_norm - trans.norm()) < 1e-12);
        }
    }
}

TEST_CASE("build_graph output always passes validate (random graphs)") {
    Rng rng(35);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + int(rng.index(6));
        std::vector<RigidTransform> poses;
        for (int v = 0; v < n; ++v)
            poses.push_back(v == 0 ? RigidTransform::identity() : random_pose(rng));
        std::vector<PairwiseResult> results;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                if (j > i + 1 && rng.uniform() < 0.5) continue;
                results.push_back(make_pair(i, j, relative_from_global(poses[i], poses[j]),
                                            1 + int(rng.index(20))));
            }
        const PoseGraph g = build_graph(results);
        CHECK(validate(g).empty());
        for (const Edge& e : g.edges) CHECK(e.weight >= 1e-3);
    }
}
