#include "plpvio/cdt.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

namespace plpvio {

namespace {

constexpr double kSnap = 1e-9;

double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

std::pair<long long, long long> snap_key(const Vec2& p) {
    return {static_cast<long long>(std::llround(p.x() / kSnap)),
            static_cast<long long>(std::llround(p.y() / kSnap))};
}

// proper crossing of open segments
bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = orient(c, d, a), d2 = orient(c, d, b);
    const double d3 = orient(a, b, c), d4 = orient(a, b, d);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
           ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

Vec2 segment_intersection(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double denom = orient(c, d, a) - orient(c, d, b);
    const double t = orient(c, d, a) / denom;
    return a + t * (b - a);
}

bool point_on_open_segment(const Vec2& p, const Vec2& a, const Vec2& b, double tol) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0) return false;
    const double t = (p - a).dot(ab) / len2;
    if (t <= 1e-12 || t >= 1.0 - 1e-12) return false;
    const Vec2 proj = a + t * ab;
    return (p - proj).norm() < tol;
}

struct Tri {
    std::array<int, 3> v;
    bool alive = true;
};

struct Triangulation {
    std::vector<Vec2> pts;
    std::vector<Tri> tris;
    std::set<std::pair<int, int>> constrained;

    static std::pair<int, int> key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

    bool is_constrained(int a, int b) const { return constrained.count(key(a, b)) > 0; }

    // edge -> adjacent alive triangle indices
    std::map<std::pair<int, int>, std::vector<int>> edge_map() const {
        std::map<std::pair<int, int>, std::vector<int>> m;
        for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
            if (!tris[t].alive) continue;
            for (int e = 0; e < 3; ++e) {
                m[key(tris[t].v[e], tris[t].v[(e + 1) % 3])].push_back(t);
            }
        }
        return m;
    }

    int add_tri(int a, int b, int c) {
        if (orient(pts[a], pts[b], pts[c]) < 0) std::swap(b, c);
        tris.push_back({{a, b, c}, true});
        return static_cast<int>(tris.size()) - 1;
    }

    int opposite_vertex(int t, int a, int b) const {
        for (int v : tris[t].v) {
            if (v != a && v != b) return v;
        }
        return -1;
    }

    bool incircle_violated(int a, int b, int c, int d) const {
        // (a, b, c) CCW; violated if d strictly inside the circumcircle
        return incircle(pts[a], pts[b], pts[c], pts[d]) > 1e-12;
    }

    // flip the edge (a, b) shared by triangles t1, t2 -> edge (c, d)
    void flip(int t1, int t2, int a, int b) {
        const int c = opposite_vertex(t1, a, b);
        const int d = opposite_vertex(t2, a, b);
        tris[t1].alive = false;
        tris[t2].alive = false;
        add_tri(a, c, d);
        add_tri(b, c, d);
    }

    void insert_point(int ip) {
        const Vec2& p = pts[ip];
        // locate: containing triangle, or edge if on it
        int found = -1, edge_a = -1, edge_b = -1;
        for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
            if (!tris[t].alive) continue;
            const auto& v = tris[t].v;
            const double o0 = orient(pts[v[0]], pts[v[1]], p);
            const double o1 = orient(pts[v[1]], pts[v[2]], p);
            const double o2 = orient(pts[v[2]], pts[v[0]], p);
            const double span =
                (pts[v[0]] - pts[v[1]]).norm() + (pts[v[1]] - pts[v[2]]).norm();
            const double tol = 1e-13 * span * span;
            if (o0 >= -tol && o1 >= -tol && o2 >= -tol) {
                found = t;
                if (o0 < tol) { edge_a = v[0]; edge_b = v[1]; }
                else if (o1 < tol) { edge_a = v[1]; edge_b = v[2]; }
                else if (o2 < tol) { edge_a = v[2]; edge_b = v[0]; }
                break;
            }
        }
        if (found < 0) return;  // outside the super-triangle; cannot happen

        std::deque<std::array<int, 2>> suspect;
        if (edge_a >= 0) {
            // 2 -> 4 split on the shared edge
            const auto em = edge_map();
            const auto& adj = em.at(key(edge_a, edge_b));
            const bool was_constrained = is_constrained(edge_a, edge_b);
            for (int t : adj) {
                const int c = opposite_vertex(t, edge_a, edge_b);
                tris[t].alive = false;
                add_tri(edge_a, c, ip);
                add_tri(edge_b, c, ip);
                suspect.push_back({edge_a, c});
                suspect.push_back({edge_b, c});
            }
            if (was_constrained) {
                constrained.erase(key(edge_a, edge_b));
                constrained.insert(key(edge_a, ip));
                constrained.insert(key(edge_b, ip));
            }
        } else {
            const auto v = tris[found].v;
            tris[found].alive = false;
            add_tri(v[0], v[1], ip);
            add_tri(v[1], v[2], ip);
            add_tri(v[2], v[0], ip);
            suspect.push_back({v[0], v[1]});
            suspect.push_back({v[1], v[2]});
            suspect.push_back({v[2], v[0]});
        }

        // legalize
        int guard = 0;
        while (!suspect.empty() && guard++ < 10000) {
            const auto [a, b] = suspect.front();
            suspect.pop_front();
            if (is_constrained(a, b)) continue;
            const auto em = edge_map();
            const auto it = em.find(key(a, b));
            if (it == em.end() || it->second.size() != 2) continue;
            int t1 = it->second[0], t2 = it->second[1];
            // t1 is the triangle containing ip
            if (opposite_vertex(t2, a, b) == ip) std::swap(t1, t2);
            if (opposite_vertex(t1, a, b) != ip) continue;
            const int d = opposite_vertex(t2, a, b);
            const auto& tv = tris[t2].v;
            if (incircle_violated(tv[0], tv[1], tv[2], ip)) {
                flip(t1, t2, a, b);
                suspect.push_back({a, d});
                suspect.push_back({b, d});
            }
        }
    }

    bool edge_exists(int a, int b) const {
        for (const auto& t : tris) {
            if (!t.alive) continue;
            int hit = 0;
            for (int v : t.v) hit += (v == a || v == b);
            if (hit == 2) return true;
        }
        return false;
    }

    void recover_constraint(int a, int b) {
        int guard = 0;
        while (!edge_exists(a, b) && guard++ < 10000) {
            // find an edge properly crossing segment (a, b) whose quad is convex
            const auto em = edge_map();
            bool flipped = false;
            for (const auto& [e, adj] : em) {
                if (adj.size() != 2) continue;
                const auto [c, d] = e;
                if (c == a || c == b || d == a || d == b) continue;
                if (!segments_cross(pts[a], pts[b], pts[c], pts[d])) continue;
                const int x = opposite_vertex(adj[0], c, d);
                const int y = opposite_vertex(adj[1], c, d);
                // quad c x d y convex <=> c and d strictly on opposite sides of (x, y)
                const double oc = orient(pts[x], pts[y], pts[c]);
                const double od = orient(pts[x], pts[y], pts[d]);
                if (!((oc > 0 && od < 0) || (oc < 0 && od > 0))) continue;
                flip(adj[0], adj[1], c, d);
                flipped = true;
                break;
            }
            if (!flipped) break;  // no recoverable crossing edge left
        }
        if (edge_exists(a, b)) {
            constrained.insert(key(a, b));
        }
    }

    void restore_delaunay() {
        for (int pass = 0; pass < 200; ++pass) {
            bool changed = false;
            const auto em = edge_map();
            for (const auto& [e, adj] : em) {
                if (adj.size() != 2) continue;
                const auto [a, b] = e;
                if (is_constrained(a, b)) continue;
                if (!tris[adj[0]].alive || !tris[adj[1]].alive) continue;
                const auto& tv = tris[adj[0]].v;
                const int d = opposite_vertex(adj[1], a, b);
                if (incircle_violated(tv[0], tv[1], tv[2], d)) {
                    // only flip if the quad is convex
                    const int c = opposite_vertex(adj[0], a, b);
                    const double oa = orient(pts[c], pts[d], pts[a]);
                    const double ob = orient(pts[c], pts[d], pts[b]);
                    if ((oa > 0 && ob < 0) || (oa < 0 && ob > 0)) {
                        flip(adj[0], adj[1], a, b);
                        changed = true;
                        break;
                    }
                }
            }
            if (!changed) return;
        }
    }
};

}  // namespace

double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    const double adx = a.x() - p.x(), ady = a.y() - p.y();
    const double bdx = b.x() - p.x(), bdy = b.y() - p.y();
    const double cdx = c.x() - p.x(), cdy = c.y() - p.y();
    const double det = (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy) -
                       (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady) +
                       (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
    // normalize by the orientation so the sign means "inside"
    return orient(a, b, c) >= 0 ? det : -det;
}

bool Mesh2D::has_edge(int a, int b) const {
    for (const auto& t : triangles) {
        int hit = 0;
        for (int v : t) hit += (v == a || v == b);
        if (hit == 2) return true;
    }
    return false;
}

Mesh2D cdt_2d(const std::vector<Vec2>& points,
              const std::vector<std::array<int, 2>>& segments) {
    Mesh2D out;
    out.input_to_vertex.assign(points.size(), -1);

    // snap and dedup
    std::map<std::pair<long long, long long>, int> seen;
    for (size_t i = 0; i < points.size(); ++i) {
        const auto k = snap_key(points[i]);
        auto it = seen.find(k);
        if (it == seen.end()) {
            const Vec2 snapped(k.first * kSnap, k.second * kSnap);
            seen.emplace(k, static_cast<int>(out.vertices.size()));
            out.input_to_vertex[i] = static_cast<int>(out.vertices.size());
            out.vertices.push_back(snapped);
        } else {
            out.input_to_vertex[i] = it->second;
        }
    }

    // remap constraints, drop degenerate ones
    std::vector<std::array<int, 2>> segs;
    for (const auto& s : segments) {
        const int a = out.input_to_vertex[s[0]], b = out.input_to_vertex[s[1]];
        if (a != b && a >= 0 && b >= 0) segs.push_back({a, b});
    }

    double span = 0.0;
    for (const auto& v : out.vertices) span = std::max(span, v.cwiseAbs().maxCoeff());
    span = std::max(span, 1.0);

    // split constraints crossing each other or passing through vertices
    for (int round = 0; round < 10; ++round) {
        bool changed = false;
        for (size_t i = 0; i < segs.size() && !changed; ++i) {
            const Vec2 a = out.vertices[segs[i][0]], b = out.vertices[segs[i][1]];
            for (size_t j = i + 1; j < segs.size() && !changed; ++j) {
                const Vec2 c = out.vertices[segs[j][0]], d = out.vertices[segs[j][1]];
                if (!segments_cross(a, b, c, d)) continue;
                const Vec2 x = segment_intersection(a, b, c, d);
                const auto k = snap_key(x);
                int xi;
                auto it = seen.find(k);
                if (it != seen.end()) {
                    xi = it->second;
                } else {
                    xi = static_cast<int>(out.vertices.size());
                    seen.emplace(k, xi);
                    out.vertices.push_back(Vec2(k.first * kSnap, k.second * kSnap));
                }
                const auto si = segs[i], sj = segs[j];
                segs.erase(segs.begin() + j);
                segs.erase(segs.begin() + i);
                for (auto [u, v] : {std::pair{si[0], xi}, {xi, si[1]}, {sj[0], xi}, {xi, sj[1]}}) {
                    if (u != v) segs.push_back({u, v});
                }
                changed = true;
            }
            if (changed) break;
            for (size_t vi = 0; vi < out.vertices.size() && !changed; ++vi) {
                const int v = static_cast<int>(vi);
                if (v == segs[i][0] || v == segs[i][1]) continue;
                if (point_on_open_segment(out.vertices[v], a, b, 4e-9 * span)) {
                    const auto si = segs[i];
                    segs.erase(segs.begin() + i);
                    segs.push_back({si[0], v});
                    segs.push_back({v, si[1]});
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }

    const int n = static_cast<int>(out.vertices.size());
    if (n < 3) return out;

    // collinearity check
    bool collinear = true;
    for (int i = 2; i < n && collinear; ++i) {
        if (std::abs(orient(out.vertices[0], out.vertices[1], out.vertices[i])) >
            1e-14 * span * span) {
            collinear = false;
        }
    }
    if (collinear) return out;

    Triangulation T;
    T.pts = out.vertices;
    // super-triangle
    Vec2 lo = out.vertices[0], hi = out.vertices[0];
    for (const auto& v : out.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Vec2 c = 0.5 * (lo + hi);
    const double r = std::max((hi - lo).norm(), 1e-6) * 50.0;
    T.pts.push_back(c + Vec2(-2 * r, -r));
    T.pts.push_back(c + Vec2(2 * r, -r));
    T.pts.push_back(c + Vec2(0, 2 * r));
    T.add_tri(n, n + 1, n + 2);

    for (int i = 0; i < n; ++i) T.insert_point(i);
    for (const auto& s : segs) T.recover_constraint(s[0], s[1]);
    T.restore_delaunay();

    for (const auto& t : T.tris) {
        if (!t.alive) continue;
        if (t.v[0] >= n || t.v[1] >= n || t.v[2] >= n) continue;
        out.triangles.push_back(t.v);
    }
    for (const auto& e : T.constrained) {
        if (e.first < n && e.second < n) out.constraints.push_back({e.first, e.second});
    }
    return out;
}

}  // namespace plpvio
