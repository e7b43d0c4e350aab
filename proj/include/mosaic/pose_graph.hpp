// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Pose graph data model: vertices hold global poses (frame -> world), edges
// hold relative measurements with correspondences. Edge (i, j) stores the pose
// of frame j expressed in frame i, i.e. Z_ij = T_i^{-1} o T_j, so a frame-j
// point q maps into frame i as Z_ij(q).

#ifndef MOSAIC_POSE_GRAPH_HPP
#define MOSAIC_POSE_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"

namespace mosaic {

/// Paired 3D points between two clouds. truth_labels (synthetic mode only)
/// mark ground-truth inliers; empty means unlabeled.
struct CorrespondenceSet {
    std::vector<Vec3> points_i;
    std::vector<Vec3> points_j;
    std::vector<std::uint8_t> truth_labels;

    std::size_t size() const { return points_i.size(); }
    bool empty() const { return points_i.empty(); }

    void add(const Vec3& pi, const Vec3& pj) {
        points_i.push_back(pi);
        points_j.push_back(pj);
    }
    void add(const Vec3& pi, const Vec3& pj, bool label) {
        add(pi, pj);
        truth_labels.push_back(label ? 1 : 0);
    }
};

struct Vertex {
    int id = 0;
    RigidTransform pose;  // frame -> world
    bool fixed = false;   // gauge anchor
};

struct Edge {
    int i = 0;
    int j = 0;
    RigidTransform relative;  // pose of frame j in frame i
    CorrespondenceSet correspondences;
    int inlier_count = 0;
    double weight = 1.0;
    double overlap_score = 0.0;
};

struct PoseGraph {
    std::vector<Vertex> vertices;
    std::vector<Edge> edges;

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_edges() const { return edges.size(); }
};

struct PairwiseResult {
    int i = 0;
    int j = 0;
    RigidTransform relative;  // pose of frame j in frame i
    CorrespondenceSet correspondences;
    int inlier_count = 0;
    double overlap_score = 0.0;
    int sufficient_iterations = 0;  // RANSAC iterations implied by the confidence; log only
};

struct Violation {
    enum class Code {
        NoAnchor,
        MultipleAnchors,
        BadVertexIds,
        SelfLoopEdge,
        DuplicateEdge,
        BadInlierCount,
        BadWeight,
        BadRotation,
        NonFiniteCorrespondence,
        DisconnectedGraph,
    };
    Code code;
    std::string message;
};

namespace detail {

inline std::vector<std::vector<int>> connected_components(int n,
                                                          const std::vector<Edge>& edges) {
    std::vector<int> parent(n);
    for (int v = 0; v < n; ++v) parent[v] = v;
    auto find = [&](int v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    for (const Edge& e : edges) {
        if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n) continue;
        parent[find(e.i)] = find(e.j);
    }
    std::map<int, std::vector<int>> groups;
    for (int v = 0; v < n; ++v) groups[find(v)].push_back(v);
    std::vector<std::vector<int>> components;
    for (auto& [root, members] : groups) components.push_back(std::move(members));
    return components;
}

inline std::string component_list_string(const std::vector<std::vector<int>>& components) {
    std::string s;
    for (std::size_t c = 0; c < components.size(); ++c) {
        s += (c == 0 ? "{" : " {");
        for (std::size_t k = 0; k < components[c].size(); ++k) {
            if (k) s += ",";
            s += std::to_string(components[c][k]);
        }
        s += "}";
    }
    return s;
}

}  // namespace detail

/// Checks every PoseGraph invariant; returns the violations found (empty when
/// the graph is valid). Never mutates.
inline std::vector<Violation> validate(const PoseGraph& graph) {
    std::vector<Violation> out;
    const int n = static_cast<int>(graph.vertices.size());

    int anchors = 0;
    std::vector<int> ids;
    ids.reserve(graph.vertices.size());
    for (const Vertex& v : graph.vertices) {
        if (v.fixed) ++anchors;
        ids.push_back(v.id);
    }
    if (anchors == 0)
        out.push_back({Violation::Code::NoAnchor, "no fixed gauge anchor vertex"});
    else if (anchors > 1)
        out.push_back({Violation::Code::MultipleAnchors,
                       std::to_string(anchors) + " fixed vertices; expected exactly 1"});

    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    bool dense = true;
    for (int v = 0; v < n; ++v) dense = dense && sorted[v] == v;
    if (!dense)
        out.push_back({Violation::Code::BadVertexIds, "vertex ids not unique/dense in [0,n)"});

    std::map<std::pair<int, int>, int> seen;
    for (const Edge& e : graph.edges) {
        if (e.i == e.j) {
            out.push_back({Violation::Code::SelfLoopEdge,
                           "self loop at vertex " + std::to_string(e.i)});
            continue;
        }
        const auto key = std::minmax(e.i, e.j);
        if (++seen[{key.first, key.second}] == 2)
            out.push_back({Violation::Code::DuplicateEdge,
                           "duplicate edge (" + std::to_string(key.first) + "," +
                               std::to_string(key.second) + ")"});
        if (e.inlier_count > static_cast<int>(e.correspondences.size()))
            out.push_back({Violation::Code::BadInlierCount,
                           "edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                               "): inlier_count exceeds correspondence count"});
        if (!(e.weight >= 0.0))
            out.push_back({Violation::Code::BadWeight,
                           "edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                               "): negative weight"});
        if (!is_rotation(e.relative.R, 1e-7))
            out.push_back({Violation::Code::BadRotation,
                           "edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                               "): relative rotation not orthonormal"});
        for (std::size_t k = 0; k < e.correspondences.size(); ++k) {
            if (!e.correspondences.points_i[k].allFinite() ||
                !e.correspondences.points_j[k].allFinite()) {
                out.push_back({Violation::Code::NonFiniteCorrespondence,
                               "edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                                   "): non-finite correspondence"});
                break;
            }
        }
    }

    if (dense && n > 0) {
        const auto components = detail::connected_components(n, graph.edges);
        if (components.size() > 1)
            out.push_back({Violation::Code::DisconnectedGraph,
                           "graph has " + std::to_string(components.size()) +
                               " components: " + detail::component_list_string(components)});
    }
    return out;
}

/// Assembles a pose graph from pairwise estimates. Vertex ids are compacted to
/// a dense [0, n) range (original order preserved); vertex 0 becomes the fixed
/// anchor with identity pose, and the remaining global poses are chained along
/// a maximum-inlier-count spanning tree grown from the anchor. Edge weights
/// are inlier_count / max_inlier_count, floored at 1e-3 so zero-inlier edges
/// never silently drop constraints.
inline PoseGraph build_graph(const std::vector<PairwiseResult>& pairwise_results) {
    if (pairwise_results.empty()) throw EmptyInput("build_graph: no pairwise results");

    std::vector<int> ids;
    for (const PairwiseResult& r : pairwise_results) {
        if (r.i == r.j) throw InvalidParameter("build_graph: self-loop pair");
        ids.push_back(r.i);
        ids.push_back(r.j);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw EmptyInput("build_graph: fewer than 2 vertices referenced");
    std::map<int, int> remap;
    for (std::size_t k = 0; k < ids.size(); ++k) remap[ids[k]] = static_cast<int>(k);
    const int n = static_cast<int>(ids.size());

    PoseGraph graph;
    graph.vertices.resize(n);
    for (int v = 0; v < n; ++v) graph.vertices[v].id = v;
    graph.vertices[0].fixed = true;

    int max_inliers = 0;
    std::map<std::pair<int, int>, bool> pair_seen;
    for (const PairwiseResult& r : pairwise_results) {
        Edge e;
        e.i = remap.at(r.i);
        e.j = remap.at(r.j);
        const auto key = std::minmax(e.i, e.j);
        if (pair_seen[{key.first, key.second}])
            throw InvalidParameter("build_graph: duplicate pair (" + std::to_string(r.i) + "," +
                                   std::to_string(r.j) + ")");
        pair_seen[{key.first, key.second}] = true;
        e.relative = r.relative;
        e.correspondences = r.correspondences;
        e.inlier_count = r.inlier_count;
        e.overlap_score = r.overlap_score;
        graph.edges.push_back(std::move(e));
        max_inliers = std::max(max_inliers, r.inlier_count);
    }
    for (Edge& e : graph.edges)
        e.weight = std::max(max_inliers > 0 ? double(e.inlier_count) / max_inliers : 0.0, 1e-3);

    const auto components = detail::connected_components(n, graph.edges);
    if (components.size() > 1)
        throw DisconnectedGraph("build_graph: graph has " + std::to_string(components.size()) +
                                " components: " + detail::component_list_string(components));

    // Prim-style growth from the anchor, always taking the strongest
    // (max inlier count) edge that extends the tree; ties broken by edge
    // order for determinism. Each new vertex is chained immediately.
    std::vector<bool> in_tree(n, false);
    in_tree[0] = true;
    graph.vertices[0].pose = RigidTransform::identity();
    for (int added = 1; added < n; ++added) {
        int best_edge = -1;
        int best_inliers = -1;
        for (std::size_t k = 0; k < graph.edges.size(); ++k) {
            const Edge& e = graph.edges[k];
            if (in_tree[e.i] == in_tree[e.j]) continue;
            if (e.inlier_count > best_inliers) {
                best_inliers = e.inlier_count;
                best_edge = static_cast<int>(k);
            }
        }
        const Edge& e = graph.edges[best_edge];
        if (in_tree[e.i]) {
            graph.vertices[e.j].pose = chain_pose(graph.vertices[e.i].pose, e.relative);
            in_tree[e.j] = true;
        } else {
            graph.vertices[e.i].pose = chain_pose(graph.vertices[e.j].pose, inverse(e.relative));
            in_tree[e.i] = true;
        }
    }
    return graph;
}

struct EdgeResidual {
    double rotation_angle = 0.0;    // radians
    double translation_norm = 0.0;  // meters
};

/// Residual of each edge measurement against the current global poses:
/// geodesic angle between edge.R and R_i^T R_j, and the norm of
/// edge.t - R_i^T (t_j - t_i). Identically zero on a consistent graph.
inline std::vector<EdgeResidual> consistency_residuals(const PoseGraph& graph) {
    std::vector<EdgeResidual> out;
    out.reserve(graph.edges.size());
    for (const Edge& e : graph.edges) {
        const RigidTransform& Ti = graph.vertices[e.i].pose;
        const RigidTransform& Tj = graph.vertices[e.j].pose;
        const RigidTransform implied = relative_from_global(Ti, Tj);
        out.push_back({rotation_geodesic_angle(e.relative.R, implied.R),
                       (e.relative.t - implied.t).norm()});
    }
    return out;
}

}  // namespace mosaic

#endif  // MOSAIC_POSE_GRAPH_HPP
