#include "plpvio/eval.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "plpvio/sim.hpp"

namespace plpvio {

namespace {

// (est index, gt index) pairs associated by nearest timestamp
std::vector<std::pair<size_t, size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                 double tol) {
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t i = 0; i < est.size(); ++i) {
        const double t = est[i].first;
        auto it = std::lower_bound(gt.begin(), gt.end(), t,
                                   [](const auto& a, double v) { return a.first < v; });
        size_t best = gt.size();
        double best_dt = tol;
        if (it != gt.end() && std::abs(it->first - t) <= best_dt) {
            best = it - gt.begin();
            best_dt = std::abs(it->first - t);
        }
        if (it != gt.begin() && std::abs(std::prev(it)->first - t) < best_dt) {
            best = std::prev(it) - gt.begin();
        }
        if (best < gt.size()) pairs.emplace_back(i, best);
    }
    return pairs;
}

void check_monotonic(const Trajectory& traj, const char* name) {
    for (size_t i = 1; i < traj.size(); ++i) {
        if (traj[i].first <= traj[i - 1].first) {
            throw std::invalid_argument(std::string(name) + ": timestamps not increasing");
        }
    }
}

}  // namespace

std::optional<ApeResult> ape_rmse(const Trajectory& est, const Trajectory& gt, double assoc_tol) {
    const auto pairs = associate(est, gt, assoc_tol);
    if (pairs.empty()) return std::nullopt;

    Eigen::Matrix3Xd src(3, pairs.size()), dst(3, pairs.size());
    for (size_t k = 0; k < pairs.size(); ++k) {
        src.col(k) = est[pairs[k].first].second.p;
        dst.col(k) = gt[pairs[k].second].second.p;
    }
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
    ApeResult out;
    out.alignment = Pose(T.topRightCorner<3, 1>(), Quat(T.topLeftCorner<3, 3>()));
    out.n_pairs = pairs.size();

    double trans_sq = 0.0, rot_sq = 0.0;
    for (const auto& [i, j] : pairs) {
        const Vec3 p = out.alignment.transform(est[i].second.p);
        trans_sq += (p - gt[j].second.p).squaredNorm();
        const Quat q = out.alignment.q * est[i].second.q;
        const double ang = q.angularDistance(gt[j].second.q);
        rot_sq += ang * ang;
    }
    out.trans_rmse = std::sqrt(trans_sq / pairs.size());
    out.rot_rmse = std::sqrt(rot_sq / pairs.size());
    return out;
}

std::optional<std::vector<RpeSample>> rpe(const Trajectory& est, const Trajectory& gt,
                                          double delta, double assoc_tol) {
    check_monotonic(est, "est");
    check_monotonic(gt, "gt");
    const auto pairs = associate(est, gt, assoc_tol);
    if (pairs.empty()) return std::nullopt;

    std::vector<RpeSample> out;
    for (size_t a = 0; a < pairs.size(); ++a) {
        const double t0 = est[pairs[a].first].first;
        size_t b = a;
        while (b < pairs.size() && est[pairs[b].first].first < t0 + delta - assoc_tol) ++b;
        if (b >= pairs.size()) break;
        if (std::abs(est[pairs[b].first].first - t0 - delta) > assoc_tol) continue;

        const Pose& p0 = est[pairs[a].first].second;
        const Pose& p1 = est[pairs[b].first].second;
        const Pose& q0 = gt[pairs[a].second].second;
        const Pose& q1 = gt[pairs[b].second].second;
        const Pose err = (q0.inverse() * q1).inverse() * (p0.inverse() * p1);
        out.push_back({t0, err.p.norm(), 2.0 * std::atan2(err.q.vec().norm(),
                                                          std::abs(err.q.w()))});
    }
    return out;
}

std::optional<double> map_error(const std::map<int, Vec3>& est, const std::map<int, Vec3>& gt,
                                const Pose& alignment) {
    double sq = 0.0;
    size_t n = 0;
    for (const auto& [id, p] : est) {
        auto it = gt.find(id);
        if (it == gt.end()) continue;
        sq += (alignment.transform(p) - it->second).squaredNorm();
        ++n;
    }
    if (n == 0) return std::nullopt;
    return std::sqrt(sq / n);
}

std::vector<Vec3> sample_mesh(const MeshMap& mesh, double density, uint64_t seed) {
    SimRng rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    std::vector<Vec3> out;
    for (const auto& [key, patch] : mesh.patches) {
        const double expected = patch.area() * density;
        int n = static_cast<int>(expected);
        if (rng.uniform() < expected - n) ++n;  // stochastic rounding keeps the density unbiased
        for (int k = 0; k < n; ++k) {
            double u = rng.uniform(), v = rng.uniform();
            if (u + v > 1.0) {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            out.push_back(patch.vertices[0] + u * (patch.vertices[1] - patch.vertices[0]) +
                          v * (patch.vertices[2] - patch.vertices[0]));
        }
    }
    return out;
}

PointGrid::PointGrid(const std::vector<Vec3>& cloud, double cell_) : points(cloud), cell(cell_) {
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        const Vec3& p = points[i];
        cells[{int(std::floor(p.x() / cell)), int(std::floor(p.y() / cell)),
               int(std::floor(p.z() / cell))}]
            .push_back(i);
    }
}

double PointGrid::nearest_distance(const Vec3& q) const {
    if (points.empty()) return std::numeric_limits<double>::infinity();
    const std::array<int, 3> base = {int(std::floor(q.x() / cell)), int(std::floor(q.y() / cell)),
                                     int(std::floor(q.z() / cell))};
    double best_sq = std::numeric_limits<double>::infinity();

    // grid extent bounds the shell search for far-away queries
    int r_max = 0;
    for (const auto& [key, idx] : cells) {
        for (int d = 0; d < 3; ++d) r_max = std::max(r_max, std::abs(key[d] - base[d]));
    }
    for (int r = 0; r <= r_max; ++r) {
        // cells closer than (r - 1) * cell were fully covered by earlier shells
        const double covered = (r - 1) * cell;
        if (best_sq < covered * covered) break;
        for (int dx = -r; dx <= r; ++dx) {
            for (int dy = -r; dy <= r; ++dy) {
                for (int dz = -r; dz <= r; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                    auto it = cells.find({base[0] + dx, base[1] + dy, base[2] + dz});
                    if (it == cells.end()) continue;
                    for (int i : it->second) {
                        best_sq = std::min(best_sq, (points[i] - q).squaredNorm());
                    }
                }
            }
        }
    }
    return std::sqrt(best_sq);
}

std::optional<double> mesh_error(const MeshMap& mesh, const std::vector<Vec3>& gt_cloud,
                                 const Pose& alignment, double density, uint64_t seed) {
    if (mesh.size() == 0 || gt_cloud.empty()) return std::nullopt;
    const auto samples = sample_mesh(mesh, density, seed);
    if (samples.empty()) return std::nullopt;
    const PointGrid grid(gt_cloud);
    double sum = 0.0;
    for (const Vec3& s : samples) sum += grid.nearest_distance(alignment.transform(s));
    return sum / samples.size();
}

}  // namespace plpvio
