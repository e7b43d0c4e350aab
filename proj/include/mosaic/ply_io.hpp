// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal ASCII PLY point-cloud I/O: a single `element vertex` with float
// x, y, z properties. Anything else is rejected with a clear error.

#ifndef MOSAIC_PLY_IO_HPP
#define MOSAIC_PLY_IO_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mosaic/errors.hpp"
#include "mosaic/geometry.hpp"
#include "mosaic/graph_io.hpp"

namespace mosaic {

inline void write_ply(std::ostream& os, const std::vector<Vec3>& points) {
    os << "ply\nformat ascii 1.0\n";
    os << "element vertex " << points.size() << '\n';
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "end_header\n";
    for (const Vec3& p : points)
        os << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
           << format_double(p.z()) << '\n';
}

inline void write_ply_file(const std::string& path, const std::vector<Vec3>& points) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_ply(os, points);
}

inline std::vector<Vec3> read_ply(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw ParseError("ply: missing magic line");
    if (!std::getline(is, line) || line.rfind("format ascii", 0) != 0)
        throw ParseError("ply: only ascii format is supported");

    std::size_t n_vertices = 0;
    bool have_vertex_element = false;
    std::vector<std::string> properties;
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        if (token == "comment") continue;
        if (token == "end_header") break;
        if (token == "element") {
            std::string name;
            std::size_t count;
            ss >> name >> count;
            if (name != "vertex")
                throw ParseError("ply: unsupported element '" + name + "'");
            if (have_vertex_element) throw ParseError("ply: multiple vertex elements");
            have_vertex_element = true;
            n_vertices = count;
        } else if (token == "property") {
            std::string type, name;
            ss >> type >> name;
            properties.push_back(name);
        } else {
            throw ParseError("ply: unsupported header token '" + token + "'");
        }
    }
    if (!have_vertex_element) throw ParseError("ply: missing vertex element");
    if (properties != std::vector<std::string>{"x", "y", "z"})
        throw ParseError("ply: vertex element must have exactly float x,y,z properties");

    std::vector<Vec3> points;
    points.reserve(n_vertices);
    for (std::size_t k = 0; k < n_vertices; ++k) {
        if (!std::getline(is, line)) throw ParseError("ply: truncated vertex data");
        std::istringstream ss(line);
        Vec3 p;
        if (!(ss >> p.x() >> p.y() >> p.z()))
            throw ParseError("ply: malformed vertex line: " + line);
        points.push_back(p);
    }
    return points;
}

inline std::vector<Vec3> read_ply_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_ply(is);
}

}  // namespace mosaic

#endif  // MOSAIC_PLY_IO_HPP
