#include "plpvio/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace plpvio {

namespace {

// disjoint-set for line merging
struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

double point_line_dist3(const Vec3& p, const Vec3& a, const Vec3& dir) {
    return ((p - a) - (p - a).dot(dir) * dir).norm();
}

// peak-normalized Gaussian taps: an isolated bin keeps its raw score, so the
// detection threshold stays comparable to raw vote counts
std::vector<double> kernel_taps(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(2 * r + 1);
    for (int k = -r; k <= r; ++k) {
        taps[k + r] = std::exp(-0.5 * k * k / (sigma * sigma));
    }
    return taps;
}

struct Voter {
    bool is_line = false;
    int id = -1;
};

}  // namespace

std::vector<std::vector<int>> merge_lines(const std::vector<LineObs>& lines,
                                          const DetectConfig& cfg) {
    const int n = static_cast<int>(lines.size());
    Dsu dsu(n);
    const double cos_gate = std::cos(cfg.merge_angle);
    for (int i = 0; i < n; ++i) {
        const Vec3 di = lines[i].dir();
        for (int j = i + 1; j < n; ++j) {
            const Vec3 dj = lines[j].dir();
            if (std::abs(di.dot(dj)) < cos_gate) continue;
            const double dist = std::max(
                {point_line_dist3(lines[j].p0, lines[i].p0, di),
                 point_line_dist3(lines[j].p1, lines[i].p0, di),
                 point_line_dist3(lines[i].p0, lines[j].p0, dj),
                 point_line_dist3(lines[i].p1, lines[j].p0, dj)});
            if (dist < cfg.merge_dist) dsu.unite(i, j);
        }
    }
    std::unordered_map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[dsu.find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    out.reserve(groups.size());
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end());
        out.push_back(std::move(members));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

std::vector<PlaneCandidate> detect_horizontal_planes(const std::vector<PatchObs>& patches,
                                                     const std::vector<LineObs>& lines,
                                                     const Vec3& gravity_dir,
                                                     const DetectConfig& cfg, Histogram1D* dump) {
    const Vec3 up = -gravity_dir.normalized();
    const int half = static_cast<int>(std::round(cfg.max_height / cfg.height_bin));
    const int nbins = 2 * half + 1;
    std::vector<double> raw(nbins, 0.0);
    std::unordered_map<int, std::vector<Voter>> voters;

    auto vote = [&](double h, double w, const Voter& v) {
        const int idx = static_cast<int>(std::llround(h / cfg.height_bin)) + half;
        if (idx < 0 || idx >= nbins) return;
        raw[idx] += w;
        voters[idx].push_back(v);
    };

    const double cos_gate = std::cos(cfg.orientation_gate);
    const double sin_gate = std::sin(cfg.orientation_gate);
    for (const auto& p : patches) {
        if (std::abs(p.normal.dot(up)) < cos_gate) continue;  // not horizontal
        for (const auto& v : p.vertices) vote(v.dot(up), 1.0, {false, p.id});
    }
    for (const auto& l : lines) {
        if (std::abs(l.dir().dot(up)) > sin_gate) continue;  // not horizontal
        vote(l.p0.dot(up), cfg.line_weight, {true, l.id});
        vote(l.p1.dot(up), cfg.line_weight, {true, l.id});
    }

    const auto taps = kernel_taps(cfg.smooth_sigma);
    const int r = static_cast<int>(taps.size()) / 2;
    std::vector<double> sm(nbins, 0.0);
    for (int i = 0; i < nbins; ++i) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k) {
            const int j = i + k;
            if (j >= 0 && j < nbins) s += taps[k + r] * raw[j];
        }
        sm[i] = s;
    }

    std::vector<PlaneCandidate> out;
    for (int i = 0; i < nbins; ++i) {
        if (sm[i] < cfg.score_threshold) continue;
        const double left = i > 0 ? sm[i - 1] : 0.0;
        const double right = i + 1 < nbins ? sm[i + 1] : 0.0;
        if (!(sm[i] >= left && sm[i] > right)) continue;  // plateau keeps first bin

        PlaneCandidate c;
        c.horizontal = true;
        c.plane = PlaneParam::from_nd(up, (i - half) * cfg.height_bin);
        c.score = sm[i];
        for (const auto& v : voters[i]) {
            auto& ids = v.is_line ? c.line_ids : c.patch_ids;
            if (std::find(ids.begin(), ids.end(), v.id) == ids.end()) ids.push_back(v.id);
        }
        out.push_back(std::move(c));
    }

    if (dump) {
        dump->bin = cfg.height_bin;
        dump->offset = half;
        dump->raw = raw;
        dump->smoothed = sm;
    }
    return out;
}

std::vector<PlaneCandidate> detect_vertical_planes(const std::vector<PatchObs>& patches,
                                                   const std::vector<LineObs>& lines,
                                                   const Vec3& gravity_dir,
                                                   const DetectConfig& cfg, Histogram2D* dump) {
    const Vec3 up = -gravity_dir.normalized();
    const auto [b1, b2] = plane_tangent_basis(up);
    const int n_theta = std::max(1, static_cast<int>(std::round(2.0 * M_PI / cfg.theta_bin)));
    const int n_dist = static_cast<int>(std::round(cfg.max_dist / cfg.dist_bin)) + 1;
    std::vector<double> raw(n_theta * n_dist, 0.0);
    std::unordered_map<int, std::vector<Voter>> voters;

    auto theta_of = [&](const Vec3& n_h) { return std::atan2(n_h.dot(b2), n_h.dot(b1)); };
    auto normal_at = [&](int ti) {
        const double th = ti * cfg.theta_bin;
        return Vec3(std::cos(th) * b1 + std::sin(th) * b2);
    };
    // votes land at canonical (theta, d >= 0); sign-of-normal insensitive
    auto vote = [&](double theta, double d, double w, const Voter& v) {
        if (d < 0) {
            d = -d;
            theta += M_PI;
        }
        int ti = static_cast<int>(std::llround(theta / cfg.theta_bin));
        ti = ((ti % n_theta) + n_theta) % n_theta;
        const int di = static_cast<int>(std::llround(d / cfg.dist_bin));
        if (di < 0 || di >= n_dist) return;
        const int cell = ti * n_dist + di;
        raw[cell] += w;
        voters[cell].push_back(v);
    };

    const double sin_gate = std::sin(cfg.orientation_gate);
    const double cos_gate = std::cos(cfg.orientation_gate);
    for (const auto& p : patches) {
        if (std::abs(p.normal.dot(up)) > sin_gate) continue;  // normal not horizontal
        const Vec3 n_h = (p.normal - p.normal.dot(up) * up).normalized();
        const Vec3 c = (p.vertices[0] + p.vertices[1] + p.vertices[2]) / 3.0;
        vote(theta_of(n_h), c.dot(n_h), 1.0, {false, p.id});
    }
    for (const auto& l : lines) {
        const Vec3 dl = l.dir();
        const Vec3 m = l.mid();
        if (std::abs(dl.dot(up)) > cos_gate) {
            // gravity-parallel: consistent with every azimuth; vote all columns
            for (int ti = 0; ti < n_theta; ++ti) {
                const Vec3 n = normal_at(ti);
                const double d = m.dot(n);
                if (d < 0) continue;  // covered by the opposite column
                const int di = static_cast<int>(std::llround(d / cfg.dist_bin));
                if (di >= n_dist) continue;
                const int cell = ti * n_dist + di;
                raw[cell] += cfg.line_weight;
                voters[cell].push_back({true, l.id});
            }
        } else {
            // the unique vertical plane containing the line
            const Vec3 n = gravity_dir.cross(dl);
            if (n.norm() < 1e-9) continue;
            const Vec3 n_h = n.normalized();
            vote(theta_of(n_h), m.dot(n_h), cfg.line_weight, {true, l.id});
        }
    }

    const auto taps = kernel_taps(cfg.smooth_sigma);
    const int r = static_cast<int>(taps.size()) / 2;
    // separable smoothing: wrap in theta, clamp-to-zero in d
    std::vector<double> tmp(raw.size(), 0.0), sm(raw.size(), 0.0);
    for (int ti = 0; ti < n_theta; ++ti) {
        for (int di = 0; di < n_dist; ++di) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int dj = di + k;
                if (dj >= 0 && dj < n_dist) s += taps[k + r] * raw[ti * n_dist + dj];
            }
            tmp[ti * n_dist + di] = s;
        }
    }
    for (int ti = 0; ti < n_theta; ++ti) {
        for (int di = 0; di < n_dist; ++di) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int tj = ((ti + k) % n_theta + n_theta) % n_theta;
                s += taps[k + r] * tmp[tj * n_dist + di];
            }
            sm[ti * n_dist + di] = s;
        }
    }

    std::vector<PlaneCandidate> out;
    for (int ti = 0; ti < n_theta; ++ti) {
        for (int di = 0; di < n_dist; ++di) {
            const double s = sm[ti * n_dist + di];
            if (s < cfg.score_threshold) continue;
            bool is_max = true;
            for (int dt = -1; dt <= 1 && is_max; ++dt) {
                for (int dd = -1; dd <= 1; ++dd) {
                    if (dt == 0 && dd == 0) continue;
                    const int tj = ((ti + dt) % n_theta + n_theta) % n_theta;
                    const int dj = di + dd;
                    const double nb =
                        (dj >= 0 && dj < n_dist) ? sm[tj * n_dist + dj] : 0.0;
                    const bool later = dt > 0 || (dt == 0 && dd > 0);
                    if (later ? (nb >= s) : (nb > s)) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (!is_max) continue;

            PlaneCandidate c;
            c.horizontal = false;
            c.plane = PlaneParam::from_nd(normal_at(ti), di * cfg.dist_bin);
            c.score = s;
            for (const auto& v : voters[ti * n_dist + di]) {
                auto& ids = v.is_line ? c.line_ids : c.patch_ids;
                if (std::find(ids.begin(), ids.end(), v.id) == ids.end()) ids.push_back(v.id);
            }
            out.push_back(std::move(c));
        }
    }

    if (dump) {
        dump->n_theta = n_theta;
        dump->theta_bin = cfg.theta_bin;
        dump->dist_bin = cfg.dist_bin;
        dump->raw = raw;
        dump->smoothed = sm;
    }
    return out;
}

std::vector<PlaneCandidate> dedup_planes(const std::vector<PlaneCandidate>& candidates,
                                         const std::vector<PlaneParam>& existing,
                                         const DetectConfig& cfg) {
    const double cos_gate = std::cos(cfg.dedup_angle);
    std::vector<PlaneCandidate> out;
    for (const auto& c : candidates) {
        bool dup = false;
        for (const auto& e : existing) {
            double dot = c.plane.n.dot(e.n);
            double dd = c.plane.d - e.d;
            if (dot < 0) {  // compare against the sign-flipped parameterization
                dot = -dot;
                dd = c.plane.d + e.d;
            }
            if (dot > cos_gate && std::abs(dd) < cfg.dedup_dist) {
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(c);
    }
    return out;
}

std::vector<PlaneAssociation> associate_points(const std::vector<PlaneParam>& planes,
                                               const std::vector<PointObs>& points,
                                               const DetectConfig& cfg) {
    std::vector<PlaneAssociation> out;
    for (const auto& pt : points) {
        int best = -1;
        double best_dist = cfg.assoc_dist;
        for (int k = 0; k < static_cast<int>(planes.size()); ++k) {
            const double dist = std::abs(planes[k].point_distance(pt.p));
            if (dist < best_dist - 1e-9) {  // ties keep the lower plane index
                best = k;
                best_dist = dist;
            }
        }
        if (best >= 0) out.push_back({pt.id, best, best_dist});
    }
    return out;
}

std::vector<PlaneAssociation> associate_lines(const std::vector<PlaneParam>& planes,
                                              const std::vector<LineObs>& lines,
                                              const DetectConfig& cfg) {
    const double sin_gate = std::sin(cfg.assoc_angle);
    std::vector<PlaneAssociation> out;
    for (const auto& l : lines) {
        const Vec3 dl = l.dir();
        int best = -1;
        double best_dist = cfg.assoc_dist;
        for (int k = 0; k < static_cast<int>(planes.size()); ++k) {
            if (std::abs(planes[k].n.dot(dl)) > sin_gate) continue;
            const double d0 = std::abs(planes[k].point_distance(l.p0));
            const double d1 = std::abs(planes[k].point_distance(l.p1));
            const double dist = std::max(d0, d1);
            if (dist < best_dist - 1e-9) {
                best = k;
                best_dist = dist;
            }
        }
        if (best >= 0) out.push_back({l.id, best, best_dist});
    }
    return out;
}

}  // namespace plpvio
