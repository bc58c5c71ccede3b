#pragma once

#include <array>
#include <vector>

#include "plpvio/math_util.hpp"

namespace plpvio {

// 2D constrained Delaunay triangulation over normalized-plane coordinates.
struct Mesh2D {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 2>> constraints;  // resolved constraint sub-edges
    std::vector<std::array<int, 3>> triangles;    // CCW
    std::vector<int> input_to_vertex;  // input point index -> vertex index (-1 if merged away)

    bool has_edge(int a, int b) const;
};

// Incremental insertion with constraint-edge recovery by flipping.
// Vertices are snapped to a 1e-9 grid; crossing constraint segments are split
// at intersection points; all-collinear input yields an empty mesh.
Mesh2D cdt_2d(const std::vector<Vec2>& points,
              const std::vector<std::array<int, 2>>& segments);

// brute-force check used by tests: strictly inside the circumcircle
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p);

}  // namespace plpvio
