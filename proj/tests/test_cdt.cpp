#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "plpvio/cdt.hpp"
#include "test_util.hpp"

using namespace plpvio;
using testing::Rng;

namespace {

bool edge_constrained(const Mesh2D& m, int a, int b) {
    for (const auto& e : m.constraints) {
        if ((e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)) return true;
    }
    return false;
}

// every input segment must appear as a chain of constrained mesh edges
bool segment_retained(const Mesh2D& m, const Vec2& pa, const Vec2& pb) {
    struct OnSeg {
        double t;
        int v;
    };
    std::vector<OnSeg> on;
    const Vec2 ab = pb - pa;
    const double len2 = ab.squaredNorm();
    for (int v = 0; v < static_cast<int>(m.vertices.size()); ++v) {
        const double t = (m.vertices[v] - pa).dot(ab) / len2;
        if (t < -1e-7 || t > 1.0 + 1e-7) continue;
        const Vec2 proj = pa + t * ab;
        if ((m.vertices[v] - proj).norm() < 1e-7) on.push_back({t, v});
    }
    std::sort(on.begin(), on.end(), [](const OnSeg& x, const OnSeg& y) { return x.t < y.t; });
    if (on.size() < 2) return false;
    for (size_t i = 0; i + 1 < on.size(); ++i) {
        if (!m.has_edge(on[i].v, on[i + 1].v)) return false;
        if (!edge_constrained(m, on[i].v, on[i + 1].v)) return false;
    }
    return true;
}

// brute-force constrained-Delaunay oracle: any point strictly inside a
// triangle's circumcircle must be hidden behind a constraint edge
bool delaunay_holds(const Mesh2D& m, double tol = 1e-9) {
    auto crosses_constraint = [&](const Vec2& a, const Vec2& b) {
        for (const auto& e : m.constraints) {
            const Vec2& c = m.vertices[e[0]];
            const Vec2& d = m.vertices[e[1]];
            const double d1 = (d - c).x() * (a - c).y() - (d - c).y() * (a - c).x();
            const double d2 = (d - c).x() * (b - c).y() - (d - c).y() * (b - c).x();
            const double d3 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
            const double d4 = (b - a).x() * (d - a).y() - (b - a).y() * (d - a).x();
            if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
                ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
                return true;
            }
        }
        return false;
    };

    for (const auto& t : m.triangles) {
        const Vec2& a = m.vertices[t[0]];
        const Vec2& b = m.vertices[t[1]];
        const Vec2& c = m.vertices[t[2]];
        const Vec2 centroid = (a + b + c) / 3.0;
        for (int v = 0; v < static_cast<int>(m.vertices.size()); ++v) {
            if (v == t[0] || v == t[1] || v == t[2]) continue;
            if (incircle(a, b, c, m.vertices[v]) <= tol) continue;
            if (!crosses_constraint(centroid, m.vertices[v])) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("square without constraints gives two Delaunay triangles") {
    const std::vector<Vec2> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const Mesh2D m = cdt_2d(pts, {});
    CHECK(m.triangles.size() == 2);
    CHECK(delaunay_holds(m));
}

TEST_CASE("constraint forces a non-Delaunay diagonal") {
    // flat quad where the Delaunay diagonal is (1, 3); force (0, 2) instead
    const std::vector<Vec2> pts = {{0, 0}, {1.0, 0.2}, {2, 0}, {1.0, -0.2}};
    const Mesh2D free_mesh = cdt_2d(pts, {});
    CHECK(free_mesh.has_edge(1, 3));

    const Mesh2D forced = cdt_2d(pts, {{{0, 2}}});
    CHECK(forced.has_edge(forced.input_to_vertex[0], forced.input_to_vertex[2]));
    CHECK(segment_retained(forced, pts[0], pts[2]));
}

TEST_CASE("all-collinear input yields empty mesh") {
    const std::vector<Vec2> pts = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    const Mesh2D m = cdt_2d(pts, {});
    CHECK(m.triangles.empty());
}

TEST_CASE("duplicate points are merged") {
    const std::vector<Vec2> pts = {{0, 0}, {1, 0}, {1, 0}, {0, 1}};
    const Mesh2D m = cdt_2d(pts, {});
    CHECK(m.vertices.size() == 3);
    CHECK(m.input_to_vertex[1] == m.input_to_vertex[2]);
    CHECK(m.triangles.size() == 1);
}

TEST_CASE("crossing constraints are split at the intersection") {
    const std::vector<Vec2> pts = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    const Mesh2D m = cdt_2d(pts, {{{0, 1}, {2, 3}}});
    CHECK(segment_retained(m, pts[0], pts[1]));
    CHECK(segment_retained(m, pts[2], pts[3]));
    CHECK(m.vertices.size() == 5);  // intersection vertex added
}

TEST_CASE("random instance with constraints keeps both properties") {
    Rng rng(42);
    std::vector<Vec2> pts;
    for (int i = 0; i < 200; ++i) {
        pts.push_back(Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    }
    std::vector<std::array<int, 2>> segs;
    std::vector<std::array<Vec2, 2>> seg_pts;
    int attempts = 0;
    while (segs.size() < 30 && attempts++ < 1000) {
        const Vec2 a(rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec2 b = a + Vec2(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
        if ((b - a).norm() < 0.05) continue;
        bool crossing = false;
        for (const auto& s : seg_pts) {
            const auto cross = [](const Vec2& p, const Vec2& q, const Vec2& r) {
                return (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
            };
            const double d1 = cross(s[0], s[1], a), d2 = cross(s[0], s[1], b);
            const double d3 = cross(a, b, s[0]), d4 = cross(a, b, s[1]);
            if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) crossing = true;
        }
        if (crossing) continue;
        const int ia = static_cast<int>(pts.size());
        pts.push_back(a);
        pts.push_back(b);
        segs.push_back({ia, ia + 1});
        seg_pts.push_back({a, b});
    }
    REQUIRE(segs.size() == 30);

    const Mesh2D m = cdt_2d(pts, segs);
    CHECK(!m.triangles.empty());
    for (const auto& s : seg_pts) {
        CHECK(segment_retained(m, s[0], s[1]));
    }
    CHECK(delaunay_holds(m));
}
