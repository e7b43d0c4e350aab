// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented pose-graph text format:
//   VERTEX <id> <tx> <ty> <tz> <r00> <r01> ... <r22>   (row-major rotation)
//   EDGE <i> <j> <tx> <ty> <tz> <r00> ... <r22> <inliers> <weight> <overlap>
//   CORR <i> <j> <xi> <yi> <zi> <xj> <yj> <zj> [<label>]
// CORR lines follow their EDGE. '#' starts a comment. Floats are printed with
// 17 significant digits so finite values round-trip bit-exactly. Unknown
// leading tokens are an error, not skipped.

#ifndef MOSAIC_GRAPH_IO_HPP
#define MOSAIC_GRAPH_IO_HPP

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/pose_graph.hpp"

namespace mosaic {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline void write_transform_fields(std::ostream& os, const RigidTransform& T) {
    os << format_double(T.t.x()) << ' ' << format_double(T.t.y()) << ' '
       << format_double(T.t.z());
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) os << ' ' << format_double(T.R(r, c));
}

inline double parse_double(std::istringstream& ss, const std::string& line) {
    double v;
    if (!(ss >> v)) throw ParseError("graph: malformed number in line: " + line);
    return v;
}

inline int parse_int(std::istringstream& ss, const std::string& line) {
    int v;
    if (!(ss >> v)) throw ParseError("graph: malformed integer in line: " + line);
    return v;
}

inline RigidTransform parse_transform(std::istringstream& ss, const std::string& line) {
    RigidTransform T;
    T.t.x() = parse_double(ss, line);
    T.t.y() = parse_double(ss, line);
    T.t.z() = parse_double(ss, line);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) T.R(r, c) = parse_double(ss, line);
    return T;
}

}  // namespace detail

inline void write_graph(std::ostream& os, const PoseGraph& graph,
                        const std::vector<std::string>& header_comments = {}) {
    for (const std::string& c : header_comments) os << "# " << c << '\n';
    for (const Vertex& v : graph.vertices) {
        os << "VERTEX " << v.id << ' ';
        detail::write_transform_fields(os, v.pose);
        os << '\n';
    }
    for (const Edge& e : graph.edges) {
        os << "EDGE " << e.i << ' ' << e.j << ' ';
        detail::write_transform_fields(os, e.relative);
        os << ' ' << e.inlier_count << ' ' << format_double(e.weight) << ' '
           << format_double(e.overlap_score) << '\n';
        const CorrespondenceSet& corr = e.correspondences;
        const bool labeled = corr.truth_labels.size() == corr.size();
        for (std::size_t k = 0; k < corr.size(); ++k) {
            os << "CORR " << e.i << ' ' << e.j;
            const Vec3& a = corr.points_i[k];
            const Vec3& b = corr.points_j[k];
            for (double x : {a.x(), a.y(), a.z(), b.x(), b.y(), b.z()})
                os << ' ' << format_double(x);
            if (labeled) os << ' ' << int(corr.truth_labels[k]);
            os << '\n';
        }
    }
}

inline void write_graph_file(const std::string& path, const PoseGraph& graph,
                             const std::vector<std::string>& header_comments = {}) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_graph(os, graph, header_comments);
}

inline PoseGraph read_graph(std::istream& is) {
    PoseGraph graph;
    std::string line;
    Edge* open_edge = nullptr;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string token;
        if (!(ss >> token)) continue;  // blank line

        if (token == "VERTEX") {
            Vertex v;
            v.id = detail::parse_int(ss, line);
            v.pose = detail::parse_transform(ss, line);
            graph.vertices.push_back(v);
            open_edge = nullptr;
        } else if (token == "EDGE") {
            Edge e;
            e.i = detail::parse_int(ss, line);
            e.j = detail::parse_int(ss, line);
            e.relative = detail::parse_transform(ss, line);
            e.inlier_count = detail::parse_int(ss, line);
            e.weight = detail::parse_double(ss, line);
            e.overlap_score = detail::parse_double(ss, line);
            graph.edges.push_back(std::move(e));
            open_edge = &graph.edges.back();
        } else if (token == "CORR") {
            const int i = detail::parse_int(ss, line);
            const int j = detail::parse_int(ss, line);
            if (!open_edge || open_edge->i != i || open_edge->j != j)
                throw ParseError("graph line " + std::to_string(line_no) +
                                 ": CORR does not follow its EDGE");
            Vec3 a, b;
            a.x() = detail::parse_double(ss, line);
            a.y() = detail::parse_double(ss, line);
            a.z() = detail::parse_double(ss, line);
            b.x() = detail::parse_double(ss, line);
            b.y() = detail::parse_double(ss, line);
            b.z() = detail::parse_double(ss, line);
            int label;
            if (ss >> label)
                open_edge->correspondences.add(a, b, label != 0);
            else
                open_edge->correspondences.add(a, b);
        } else {
            throw ParseError("graph line " + std::to_string(line_no) + ": unknown token '" +
                             token + "'");
        }
    }
    // Vertex 0 is the conventional anchor; mark it if ids are present.
    for (Vertex& v : graph.vertices) v.fixed = (v.id == 0);
    return graph;
}

inline PoseGraph read_graph_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_graph(is);
}

}  // namespace mosaic

#endif  // MOSAIC_GRAPH_IO_HPP
