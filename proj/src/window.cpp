#include "plpvio/window.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

namespace plpvio {

const Keyframe* SlidingWindow::frame_by_id(int id) const {
    for (const auto& f : frames) {
        if (f.id == id) return &f;
    }
    return nullptr;
}

Keyframe* SlidingWindow::frame_by_id(int id) {
    for (auto& f : frames) {
        if (f.id == id) return &f;
    }
    return nullptr;
}

namespace {

constexpr double kGaugeSigma = 1e-4;

struct Layout {
    std::map<int, int> frame_off, plane_off, line_off, point_off;
    int marg_dim = 0;  // frames + planes + lines
    int total = 0;
};

Layout make_layout(const SlidingWindow& w, const WindowConfig& cfg) {
    Layout L;
    int off = 0;
    for (const auto& f : w.frames) {
        L.frame_off[f.id] = off;
        off += 15;
    }
    if (cfg.use_planes) {
        for (const auto& [id, pl] : w.planes) {
            L.plane_off[id] = off;
            off += 3;
        }
    }
    if (cfg.use_lines) {
        for (const auto& [id, ln] : w.lines) {
            if (!ln.initialized) continue;
            L.line_off[id] = off;
            off += 4;
        }
    }
    L.marg_dim = off;
    for (const auto& [id, pt] : w.points) {
        if (!pt.initialized) continue;
        L.point_off[id] = off;
        off += 1;
    }
    L.total = off;
    return L;
}

using Chunks = std::vector<std::pair<int, int>>;  // (global col offset, width)

// Factors gated out at the linearization point (behind-camera points,
// degenerate line projections), keyed by (landmark id, frame id). The same
// set is skipped when scoring candidate steps so an LM iteration compares
// costs over one consistent factor set.
struct GateSet {
    std::set<std::pair<int, int>> points, lines;
};

struct Assembly {
    bool with_jac = false;
    MatX H;
    VecX b;
    double cost = 0.0;
    double c_prior = 0, c_imu = 0, c_point = 0, c_line = 0, c_plane = 0;
    int n_pt = 0, n_ln = 0, n_pl = 0, n_imu = 0;

    void init(int n, bool jac) {
        with_jac = jac;
        if (jac) {
            H = MatX::Zero(n, n);
            b = VecX::Zero(n);
        }
    }

    // residuals arrive pre-whitened; robust factors get Cauchy + Triggs
    void add(VecX r, MatX J, const Chunks& chunks, double* bucket, bool robust, double scale) {
        if (robust) {
            const double sq = r.squaredNorm();
            const LossEval loss = cauchy_weight(sq, scale);
            cost += loss.rho;
            if (bucket) *bucket += loss.rho;
            if (!with_jac) return;
            const RobustCorrector corr(loss, sq);
            corr.apply(r, J);
        } else {
            const double c = r.squaredNorm();
            cost += c;
            if (bucket) *bucket += c;
            if (!with_jac) return;
        }
        scatter(r, J, chunks);
    }

    void scatter(const VecX& r, const MatX& J, const Chunks& chunks) {
        int ca = 0;
        for (const auto& [offa, wa] : chunks) {
            const MatX Ja = J.middleCols(ca, wa);
            b.segment(offa, wa) += Ja.transpose() * r;
            int cb = 0;
            for (const auto& [offb, wb] : chunks) {
                H.block(offa, offb, wa, wb).noalias() += Ja.transpose() * J.middleCols(cb, wb);
                cb += wb;
            }
            ca += wa;
        }
    }
};

Vec3 log_quat(const Quat& q) { return log_so3(q.toRotationMatrix()); }

VecX state_boxminus(const ImuState& x, const ImuState& x0) {
    VecX d(15);
    d.segment<3>(0) = x.pose.p - x0.pose.p;
    d.segment<3>(3) = log_quat(x0.pose.q.conjugate() * x.pose.q);
    d.segment<3>(6) = x.v - x0.v;
    d.segment<3>(9) = x.ba - x0.ba;
    d.segment<3>(12) = x.bg - x0.bg;
    return d;
}

// prior factor: r = r0 + J0 * (x [-] x0)
void add_prior(const SlidingWindow& w, const Layout& L, Assembly& A) {
    const MarginalPrior& pr = w.prior;
    if (!pr.valid) return;
    VecX delta = VecX::Zero(pr.J0.cols());
    Chunks chunks;
    for (size_t k = 0; k < pr.frame_ids.size(); ++k) {
        const Keyframe* f = w.frame_by_id(pr.frame_ids[k]);
        if (!f) continue;  // defensive; prior frames should all be live
        delta.segment<15>(15 * k) = state_boxminus(f->x, pr.lin_points[k]);
        chunks.emplace_back(L.frame_off.at(pr.frame_ids[k]), 15);
    }
    const VecX r = pr.r0 + pr.J0 * delta;
    A.add(r, pr.J0, chunks, &A.c_prior, false, 0);
}

void add_gauge(const SlidingWindow& w, const Layout& L, const WindowConfig& cfg, Assembly& A,
               const std::optional<std::pair<int, Pose>>& gauge) {
    if (!gauge) return;
    const Keyframe* f = w.frame_by_id(gauge->first);
    if (!f) return;
    if (w.prior.valid) return;  // the prior already carries the anchoring
    // pin position and yaw only; roll/pitch stay observable through gravity
    const double inv = 1.0 / kGaugeSigma;
    const Vec3 theta_w = log_quat(f->x.pose.q * gauge->second.q.conjugate());
    VecX r(4);
    r.segment<3>(0) = (f->x.pose.p - gauge->second.p) * inv;
    r(3) = theta_w.z() * inv;
    MatX J = MatX::Zero(4, 6);
    J.block<3, 3>(0, 0) = inv * Mat3::Identity();
    J.block<1, 3>(3, 3) = inv * gauge->second.q.toRotationMatrix().row(2);
    A.add(r, J, {{L.frame_off.at(gauge->first), 6}}, &A.c_prior, false, 0);
}

void add_imu_factors(const SlidingWindow& w, const Layout& L, Assembly& A) {
    for (size_t k = 1; k < w.frames.size(); ++k) {
        const Keyframe& fi = w.frames[k - 1];
        const Keyframe& fj = w.frames[k];
        if (!fj.preint) continue;
        const ImuFactorEval e = imu_residual(fi.x, fj.x, *fj.preint);
        MatX J(15, 30);
        J.block<15, 6>(0, 0) = e.J_pose_i;
        J.block<15, 9>(0, 6) = e.J_sb_i;
        J.block<15, 6>(0, 15) = e.J_pose_j;
        J.block<15, 9>(0, 21) = e.J_sb_j;
        A.add(e.residual, J, {{L.frame_off.at(fi.id), 15}, {L.frame_off.at(fj.id), 15}},
              &A.c_imu, false, 0);
        ++A.n_imu;
    }
}

void add_point_factors(const SlidingWindow& w, const Layout& L, const WindowConfig& cfg,
                       Assembly& A, const GateSet* use_gates, GateSet* record_gates) {
    const double inv_sigma = 1.0 / cfg.noise.reproj_sigma();
    for (const auto& [id, pt] : w.points) {
        if (!pt.initialized) continue;
        const auto it = L.point_off.find(id);
        if (it == L.point_off.end()) continue;
        const Keyframe* fa = w.frame_by_id(pt.anchor);
        if (!fa) continue;
        const Vec3 obs_a = pt.obs.at(pt.anchor);
        for (const auto& [fid, obs_j] : pt.obs) {
            if (fid == pt.anchor) continue;
            const Keyframe* fj = w.frame_by_id(fid);
            if (!fj) continue;
            if (use_gates && use_gates->points.count({id, fid})) continue;
            PointReprojFactor fac;
            fac.frame_i = pt.anchor;
            fac.frame_j = fid;
            fac.obs_i = obs_a;
            fac.obs_j = obs_j;
            const PointReprojEval e =
                point_reproj_residual(fa->x, fj->x, pt.lambda, fac, cfg.T_bc);
            if (e.behind_camera) {
                if (!use_gates) {
                    if (record_gates) record_gates->points.insert({id, fid});
                } else {
                    A.cost += 1e12;  // active factor pushed behind the camera
                }
                continue;
            }
            VecX r = e.residual * inv_sigma;
            MatX J(2, 13);
            J.block<2, 6>(0, 0) = e.J_pose_i * inv_sigma;
            J.block<2, 6>(0, 6) = e.J_pose_j * inv_sigma;
            J.block<2, 1>(0, 12) = e.J_lambda * inv_sigma;
            A.add(r, J,
                  {{L.frame_off.at(pt.anchor), 6}, {L.frame_off.at(fid), 6}, {it->second, 1}},
                  &A.c_point, true, cfg.cauchy_c);
            ++A.n_pt;
        }
    }
}

void add_line_factors(const SlidingWindow& w, const Layout& L, const WindowConfig& cfg,
                      Assembly& A, const GateSet* use_gates, GateSet* record_gates) {
    if (!cfg.use_lines) return;
    const double inv_sigma = 1.0 / cfg.noise.reproj_sigma();
    for (const auto& [id, ln] : w.lines) {
        if (!ln.initialized) continue;
        const auto it = L.line_off.find(id);
        if (it == L.line_off.end()) continue;
        for (const auto& [fid, seg] : ln.obs) {
            const Keyframe* f = w.frame_by_id(fid);
            if (!f) continue;
            if (use_gates && use_gates->lines.count({id, fid})) continue;
            LineReprojFactor fac;
            fac.frame = fid;
            fac.line_id = id;
            fac.s = seg.first;
            fac.e = seg.second;
            const LineReprojEval e = line_reproj_residual(f->x, ln.line_w, fac, cfg.T_bc);
            if (e.degenerate) {
                if (!use_gates) {
                    if (record_gates) record_gates->lines.insert({id, fid});
                } else {
                    A.cost += 1e12;  // active factor became degenerate
                }
                continue;
            }
            VecX r = e.residual * inv_sigma;
            MatX J(2, 10);
            J.block<2, 6>(0, 0) = e.J_pose * inv_sigma;
            J.block<2, 4>(0, 6) = e.J_line * inv_sigma;
            A.add(r, J, {{L.frame_off.at(fid), 6}, {it->second, 4}}, &A.c_line, true,
                  cfg.cauchy_c);
            ++A.n_ln;
        }
    }
}

void add_coplanar_factors(const SlidingWindow& w, const Layout& L, const WindowConfig& cfg,
                          Assembly& A) {
    if (!cfg.use_planes) return;
    const double inv_d = 1.0 / cfg.noise.plane_dist_sigma;
    const double inv_a = 1.0 / cfg.noise.plane_angle_sigma;
    for (const auto& fac : w.coplanar) {
        const auto pit = w.planes.find(fac.plane_id);
        if (pit == w.planes.end()) continue;
        const auto poff = L.plane_off.find(fac.plane_id);
        if (poff == L.plane_off.end()) continue;
        const PlaneParam& pi = pit->second.pi;

        if (fac.kind == LandmarkKind::Point) {
            const auto lit = w.points.find(fac.landmark_id);
            if (lit == w.points.end() || !lit->second.initialized) continue;
            const auto loff = L.point_off.find(fac.landmark_id);
            if (loff == L.point_off.end()) continue;
            const PointLandmark& pt = lit->second;
            const Keyframe* fa = w.frame_by_id(pt.anchor);
            if (!fa) continue;
            const PointWorldEval pw =
                point_world(fa->x, pt.obs.at(pt.anchor), pt.lambda, cfg.T_bc);
            const PointOnPlaneEval e = point_on_plane_residual(pw.f_w, pi);
            VecX r(1);
            r(0) = e.residual * inv_d;
            MatX J(1, 10);
            J.block<1, 3>(0, 0) = e.J_point.transpose() * pw.J_dp * inv_d;
            J.block<1, 3>(0, 3) = e.J_point.transpose() * pw.J_dtheta * inv_d;
            J.block<1, 3>(0, 6) = e.J_plane.transpose() * inv_d;
            J(0, 9) = e.J_point.dot(pw.J_lambda) * inv_d;
            A.add(r, J,
                  {{L.frame_off.at(pt.anchor), 6}, {poff->second, 3}, {loff->second, 1}},
                  &A.c_plane, true, cfg.cauchy_c);
            ++A.n_pl;
        } else {
            if (!cfg.use_lines) continue;
            const auto lit = w.lines.find(fac.landmark_id);
            if (lit == w.lines.end() || !lit->second.initialized) continue;
            const auto loff = L.line_off.find(fac.landmark_id);
            if (loff == L.line_off.end()) continue;
            const LineOnPlaneEval e = line_on_plane_residual(lit->second.line_w, pi);
            VecX r(2);
            r(0) = e.residual(0) * inv_d;
            r(1) = e.residual(1) * inv_a;
            MatX J(2, 7);
            J.block<1, 4>(0, 0) = e.J_line.row(0) * inv_d;
            J.block<1, 4>(1, 0) = e.J_line.row(1) * inv_a;
            J.block<1, 3>(0, 4) = e.J_plane.row(0) * inv_d;
            J.block<1, 3>(1, 4) = e.J_plane.row(1) * inv_a;
            A.add(r, J, {{loff->second, 4}, {poff->second, 3}}, &A.c_plane, true, cfg.cauchy_c);
            ++A.n_pl;
        }
    }
}

Assembly assemble(const SlidingWindow& w, const Layout& L, const WindowConfig& cfg, bool jac,
                  const std::optional<std::pair<int, Pose>>& gauge,
                  const GateSet* use_gates = nullptr, GateSet* record_gates = nullptr) {
    Assembly A;
    A.init(L.total, jac);
    add_prior(w, L, A);
    add_gauge(w, L, cfg, A, gauge);
    add_imu_factors(w, L, A);
    add_point_factors(w, L, cfg, A, use_gates, record_gates);
    add_line_factors(w, L, cfg, A, use_gates, record_gates);
    add_coplanar_factors(w, L, cfg, A);
    return A;
}

void retract_window(SlidingWindow& w, const Layout& L, const WindowConfig& cfg, const VecX& dx) {
    for (auto& f : w.frames) {
        const int off = L.frame_off.at(f.id);
        f.x.pose.retract(dx.segment<3>(off), dx.segment<3>(off + 3));
        f.x.v += dx.segment<3>(off + 6);
        f.x.ba += dx.segment<3>(off + 9);
        f.x.bg += dx.segment<3>(off + 12);
    }
    if (cfg.use_planes) {
        for (auto& [id, pl] : w.planes) {
            const int off = L.plane_off.at(id);
            pl.pi = plane_update(pl.pi, dx(off), dx(off + 1), dx(off + 2));
        }
    }
    if (cfg.use_lines) {
        for (auto& [id, ln] : w.lines) {
            const auto it = L.line_off.find(id);
            if (it == L.line_off.end()) continue;
            ln.line_w = orthonormal_update(ln.line_w, dx.segment<4>(it->second));
        }
    }
    for (auto& [id, pt] : w.points) {
        const auto it = L.point_off.find(id);
        if (it == L.point_off.end()) continue;
        pt.lambda =
            std::clamp(pt.lambda + dx(it->second), 1.0 / kMaxDepth, 1.0 / kMinDepth);
    }
}

// solve (H + lm * diag(H)) dx = -b, Schur-eliminating the trailing point block
VecX solve_step(const MatX& H, const VecX& b, int marg_dim, double lm, bool dense) {
    const int n = static_cast<int>(H.rows());
    MatX Hd = H;
    for (int i = 0; i < n; ++i) {
        Hd(i, i) += lm * std::max(H(i, i), 1e-12);
    }
    if (dense || marg_dim == n) {
        return Hd.ldlt().solve(-b);
    }
    const int m = n - marg_dim;
    const MatX Hpp = Hd.topLeftCorner(marg_dim, marg_dim);
    const MatX Hpm = Hd.topRightCorner(marg_dim, m);
    const VecX dmm = Hd.bottomRightCorner(m, m).diagonal();  // points are scalar, diagonal
    const VecX bm = b.tail(m);
    VecX inv_d(m);
    for (int i = 0; i < m; ++i) inv_d(i) = 1.0 / std::max(dmm(i), 1e-12);

    const MatX Hred = Hpp - Hpm * inv_d.asDiagonal() * Hpm.transpose();
    const VecX bred = b.head(marg_dim) - Hpm * (inv_d.asDiagonal() * bm);
    VecX dx(n);
    dx.head(marg_dim) = Hred.ldlt().solve(-bred);
    dx.tail(m) = inv_d.asDiagonal() * (-bm - Hpm.transpose() * dx.head(marg_dim));
    return dx;
}

}  // namespace

// ---- triangulation -------------------------------------------------------

bool triangulate_point(const SlidingWindow& w, const WindowConfig& cfg, PointLandmark& pt) {
    std::vector<std::pair<const Keyframe*, Vec3>> views;
    for (const auto& [fid, obs] : pt.obs) {
        if (const Keyframe* f = w.frame_by_id(fid)) views.emplace_back(f, obs);
    }
    if (views.size() < 2) return false;

    const Pose T_wc0 = views.front().first->x.pose * cfg.T_bc;
    const Vec3 f0 = views.front().second.normalized();
    double max_parallax = 0.0;
    for (size_t k = 1; k < views.size(); ++k) {
        const Pose T_wck = views[k].first->x.pose * cfg.T_bc;
        const Vec3 dir = (T_wc0.q.conjugate() * (T_wck.q * views[k].second)).normalized();
        max_parallax = std::max(
            max_parallax, std::acos(std::clamp(f0.dot(dir), -1.0, 1.0)));
    }
    if (max_parallax < cfg.min_parallax) return false;

    MatX A(2 * views.size(), 4);
    for (size_t k = 0; k < views.size(); ++k) {
        const Pose T_ck_c0 = (views[k].first->x.pose * cfg.T_bc).inverse() * T_wc0;
        Eigen::Matrix<double, 3, 4> P;
        P.leftCols<3>() = T_ck_c0.R();
        P.col(3) = T_ck_c0.p;
        const Vec3& m = views[k].second;
        A.row(2 * k) = m.x() / m.z() * P.row(2) - P.row(0);
        A.row(2 * k + 1) = m.y() / m.z() * P.row(2) - P.row(1);
    }
    const Vec4 X = Eigen::JacobiSVD<MatX>(A, Eigen::ComputeFullV).matrixV().col(3);
    if (std::abs(X(3)) < 1e-12) return false;
    const double depth = X(2) / X(3);
    if (!depth_in_range(depth)) return false;

    pt.anchor = views.front().first->id;
    pt.lambda = 1.0 / depth;
    pt.initialized = true;
    return true;
}

bool triangulate_line(const SlidingWindow& w, const WindowConfig& cfg, LineLandmark& ln) {
    std::vector<std::pair<const Keyframe*, std::pair<Vec3, Vec3>>> views;
    for (const auto& [fid, seg] : ln.obs) {
        if (const Keyframe* f = w.frame_by_id(fid)) views.emplace_back(f, seg);
    }
    if (views.size() < 2) return false;

    auto backprojection_plane = [&](const Keyframe* f,
                                    const std::pair<Vec3, Vec3>& seg) -> std::pair<Vec3, double> {
        const Pose T_wc = f->x.pose * cfg.T_bc;
        const Vec3 n_c = seg.first.cross(seg.second);
        const Vec3 n_w = T_wc.q * n_c;
        return {n_w, n_w.dot(T_wc.p)};
    };

    const auto [n1, c1] = backprojection_plane(views.front().first, views.front().second);
    const auto [n2, c2] = backprojection_plane(views.back().first, views.back().second);
    const Vec3 n1h = n1.normalized(), n2h = n2.normalized();
    const double dihedral = std::acos(std::clamp(std::abs(n1h.dot(n2h)), 0.0, 1.0));
    if (dihedral < cfg.min_line_dihedral) return false;

    const Vec3 d = n1.cross(n2).normalized();
    Mat3 M;
    M.row(0) = n1.transpose();
    M.row(1) = n2.transpose();
    M.row(2) = d.transpose();
    const Vec3 p0 = M.fullPivLu().solve(Vec3(c1, c2, 0.0));

    PluckerLine line_w;
    line_w.d = d;
    line_w.n = p0.cross(d);
    ln.line_w = plucker_to_orthonormal(line_w);
    ln.initialized = true;
    return true;
}

std::optional<std::array<Vec3, 2>> line_endpoints_world(const SlidingWindow& w,
                                                        const WindowConfig& cfg,
                                                        const LineLandmark& ln) {
    if (!ln.initialized || ln.obs.empty()) return std::nullopt;
    const Keyframe* f = w.frame_by_id(ln.obs.begin()->first);
    if (!f) return std::nullopt;
    const Pose T_wc = f->x.pose * cfg.T_bc;
    const PluckerLine line_c = plucker_transform(orthonormal_to_plucker(ln.line_w),
                                                 T_wc.inverse());
    const auto& seg = ln.obs.begin()->second;
    const auto ep = line_endpoints_3d(line_c, seg.first, seg.second);
    if (!ep) return std::nullopt;
    return std::array<Vec3, 2>{T_wc.transform(ep->start), T_wc.transform(ep->end)};
}

std::optional<Vec3> point_position_world(const SlidingWindow& w, const WindowConfig& cfg,
                                         const PointLandmark& pt) {
    if (!pt.initialized) return std::nullopt;
    const Keyframe* f = w.frame_by_id(pt.anchor);
    if (!f) return std::nullopt;
    return point_world(f->x, pt.obs.at(pt.anchor), pt.lambda, cfg.T_bc).f_w;
}

// ---- optimization --------------------------------------------------------

OptimizeStats optimize_window(SlidingWindow& w, const WindowConfig& cfg) {
    OptimizeStats stats;
    if (w.frames.size() < 2) return stats;

    // Fallback gauge for windows without a prior (tests, cold starts): pin
    // the oldest frame's position and yaw at its incoming estimate.
    std::optional<std::pair<int, Pose>> gauge;
    gauge = {w.frames.front().id, w.frames.front().x.pose};

    Layout L = make_layout(w, cfg);
    if (L.total == 0) return stats;

    double lm = cfg.lambda_init;
    GateSet gates;
    Assembly A = assemble(w, L, cfg, true, gauge, nullptr, &gates);
    double cost = A.cost;
    stats.initial_cost = cost;
    stats.accepted_costs.push_back(cost);

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        int rejects = 0;
        bool accepted = false;
        bool stalled = false;
        VecX dx;
        while (rejects < cfg.max_rejects) {
            dx = solve_step(A.H, A.b, L.marg_dim, lm, cfg.dense_solver);
            if (dx.norm() < cfg.step_tol) {
                stalled = true;  // converged, nothing left to gain
                break;
            }
            SlidingWindow cand = w;
            retract_window(cand, L, cfg, dx);
            const Assembly Ac = assemble(cand, L, cfg, false, gauge, &gates);
            if (Ac.cost < cost) {
                w = std::move(cand);
                lm = std::max(lm / cfg.lambda_down, 1e-12);
                accepted = true;
                break;
            }
            if (Ac.cost <= cost * (1.0 + 1e-12)) {
                stalled = true;  // flat within fp noise: optimum, not divergence
                break;
            }
            if (std::getenv("PLPVIO_TRACE")) {
                int imax = 0;
                dx.cwiseAbs().maxCoeff(&imax);
                const char* kind = "frame";
                int kid = -1;
                for (const auto& [id, off] : L.line_off) {
                    if (imax >= off && imax < off + 4) kind = "line", kid = id;
                }
                for (const auto& [id, off] : L.point_off) {
                    if (imax == off) kind = "point", kid = id;
                }
                fprintf(stderr,
                        "  reject it=%d lm=%.3e |dx|=%.3e max@%d(%s %d)=%.3e cost=%.9f "
                        "cand=%.9f\n",
                        iter, lm, dx.norm(), imax, kind, kid, dx(imax), cost, Ac.cost);
            }
            lm *= cfg.lambda_up;
            // attempts below the initial damping are effectively Gauss-Newton
            // retries; only properly damped failures count toward divergence
            if (lm >= cfg.lambda_init) ++rejects;
        }
        if (stalled) break;
        if (!accepted) {
            stats.diverged = true;
            break;
        }
        ++stats.iterations;
        gates = GateSet{};
        A = assemble(w, L, cfg, true, gauge, nullptr, &gates);
        const double new_cost = A.cost;
        stats.accepted_costs.push_back(new_cost);
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        cost = new_cost;
        if (rel < cfg.rel_cost_tol || dx.norm() < cfg.step_tol) break;
    }

    if (std::getenv("PLPVIO_TRACE")) {
        const ImuState& x0 = w.frames.front().x;
        fprintf(stderr, "win f0=%d ba=[%.4f %.4f %.4f] bg=[%.5f %.5f %.5f] costs:",
                w.frames.front().id, x0.ba.x(), x0.ba.y(), x0.ba.z(), x0.bg.x(), x0.bg.y(),
                x0.bg.z());
        for (double c : stats.accepted_costs) fprintf(stderr, " %.6f", c);
        fprintf(stderr, "\n");
    }
    const Assembly Af = assemble(w, L, cfg, false, gauge);
    stats.final_cost = Af.cost;
    stats.cost_prior = Af.c_prior;
    stats.cost_imu = Af.c_imu;
    stats.cost_point = Af.c_point;
    stats.cost_line = Af.c_line;
    stats.cost_plane = Af.c_plane;
    stats.n_point_factors = Af.n_pt;
    stats.n_line_factors = Af.n_ln;
    stats.n_plane_factors = Af.n_pl;
    stats.n_imu_factors = Af.n_imu;
    return stats;
}

MarginalPrior make_initial_prior(const Keyframe& kf) {
    MarginalPrior pr;
    pr.valid = true;
    VecX inv_sigma(15);
    inv_sigma.segment<3>(0).setConstant(1.0 / 1e-3);   // position [m]
    inv_sigma.segment<3>(3).setConstant(1.0 / 1e-3);   // orientation [rad]
    inv_sigma.segment<3>(6).setConstant(1.0 / 5e-2);   // velocity [m/s]
    inv_sigma.segment<3>(9).setConstant(1.0 / 5e-2);   // accel bias [m/s^2]
    inv_sigma.segment<3>(12).setConstant(1.0 / 1e-2);  // gyro bias [rad/s]
    pr.J0 = MatX(inv_sigma.asDiagonal());
    pr.r0 = VecX::Zero(15);
    pr.frame_ids = {kf.id};
    pr.lin_points = {kf.x};
    return pr;
}

// ---- marginalization -----------------------------------------------------

void schur_marginalize(const MatX& H, const VecX& b, const std::vector<int>& keep,
                       const std::vector<int>& marg, MatX* H_out, VecX* b_out) {
    const int nk = static_cast<int>(keep.size());
    const int nm = static_cast<int>(marg.size());
    MatX Hkk(nk, nk), Hkm(nk, nm), Hmm(nm, nm);
    VecX bk(nk), bm(nm);
    for (int i = 0; i < nk; ++i) {
        bk(i) = b(keep[i]);
        for (int j = 0; j < nk; ++j) Hkk(i, j) = H(keep[i], keep[j]);
        for (int j = 0; j < nm; ++j) Hkm(i, j) = H(keep[i], marg[j]);
    }
    for (int i = 0; i < nm; ++i) {
        bm(i) = b(marg[i]);
        for (int j = 0; j < nm; ++j) Hmm(i, j) = H(marg[i], marg[j]);
    }
    // pseudo-inverse of the (possibly rank-deficient) marginal block
    Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (Hmm + Hmm.transpose()));
    VecX inv_ev = eig.eigenvalues();
    for (int i = 0; i < nm; ++i) {
        inv_ev(i) = inv_ev(i) > 1e-10 ? 1.0 / inv_ev(i) : 0.0;
    }
    const MatX Hmm_inv =
        eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
    *H_out = Hkk - Hkm * Hmm_inv * Hkm.transpose();
    *b_out = bk - Hkm * Hmm_inv * bm;
}

void sqrt_factorize(const MatX& H, const VecX& b, MatX* J0, VecX* r0) {
    Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (H + H.transpose()));
    VecX ev = eig.eigenvalues();
    VecX sqrt_ev = ev, inv_sqrt_ev = ev;
    for (int i = 0; i < ev.size(); ++i) {
        const double v = std::max(ev(i), 0.0);
        sqrt_ev(i) = std::sqrt(v);
        inv_sqrt_ev(i) = v > 1e-12 ? 1.0 / std::sqrt(v) : 0.0;
    }
    *J0 = sqrt_ev.asDiagonal() * eig.eigenvectors().transpose();
    *r0 = inv_sqrt_ev.asDiagonal() * eig.eigenvectors().transpose() * b;
}

void marginalize_oldest(SlidingWindow& w, const WindowConfig& cfg) {
    if (w.frames.empty()) return;
    const int f0 = w.frames.front().id;

    // The gauge factor is deliberately left out of the sub-assembly: absolute
    // position/yaw information folded into the prior would pin the trajectory
    // to stale linearization points. The prior keeps a nullspace instead and
    // optimize_window re-pins the gauge at the current estimate every window.
    const std::optional<std::pair<int, Pose>> gauge;

    // linearize only what touches the marginalized block: prior, the first
    // IMU factor, and factors of points anchored at the oldest frame
    SlidingWindow sub;
    sub.frames = w.frames;
    sub.prior = w.prior;
    for (const auto& [id, pt] : w.points) {
        if (pt.initialized && pt.anchor == f0 && pt.obs.size() >= 2) sub.points[id] = pt;
    }
    if (w.frames.size() >= 2) {
        for (size_t k = 2; k < sub.frames.size(); ++k) sub.frames[k].preint.reset();
    }

    WindowConfig sub_cfg = cfg;
    sub_cfg.use_lines = false;
    sub_cfg.use_planes = false;
    const Layout L = make_layout(sub, sub_cfg);
    const Assembly A = assemble(sub, L, sub_cfg, true, gauge);

    std::vector<int> keep, marg;
    for (const auto& f : sub.frames) {
        const int off = L.frame_off.at(f.id);
        auto& dst = (f.id == f0) ? marg : keep;
        for (int i = 0; i < 15; ++i) dst.push_back(off + i);
    }
    for (const auto& [id, off] : L.point_off) marg.push_back(off);

    MatX Hk;
    VecX bk;
    schur_marginalize(A.H, A.b, keep, marg, &Hk, &bk);

    if (Hk.size() > 0 && Hk.norm() > 0) {
        MarginalPrior pr;
        pr.valid = true;
        sqrt_factorize(Hk, bk, &pr.J0, &pr.r0);
        for (const auto& f : sub.frames) {
            if (f.id == f0) continue;
            pr.frame_ids.push_back(f.id);
            pr.lin_points.push_back(f.x);
        }
        if (std::getenv("PLPVIO_NO_PRIOR") == nullptr) w.prior = std::move(pr);
    }

    // drop the frame and rewire landmarks
    std::vector<int> dead_points, dead_lines;
    for (auto& [id, pt] : w.points) {
        const std::optional<Vec3> world = point_position_world(w, cfg, pt);
        pt.obs.erase(f0);
        if (pt.obs.empty()) {
            dead_points.push_back(id);
            continue;
        }
        if (pt.anchor == f0) {
            if (!world || pt.obs.size() < 2) {
                pt.initialized = false;
                pt.anchor = -1;
                if (pt.obs.size() < 2) continue;
                continue;
            }
            const int new_anchor = pt.obs.begin()->first;
            const Keyframe* fa = w.frame_by_id(new_anchor);
            const Pose T_cw = (fa->x.pose * cfg.T_bc).inverse();
            const double depth = T_cw.transform(*world).z();
            if (!depth_in_range(depth)) {
                pt.initialized = false;
                pt.anchor = -1;
                continue;
            }
            pt.anchor = new_anchor;
            pt.lambda = 1.0 / depth;
        }
    }
    for (auto& [id, ln] : w.lines) {
        ln.obs.erase(f0);
        if (ln.obs.empty()) dead_lines.push_back(id);
    }
    for (int id : dead_points) w.points.erase(id);
    for (int id : dead_lines) w.lines.erase(id);
    w.coplanar.erase(
        std::remove_if(w.coplanar.begin(), w.coplanar.end(),
                       [&](const CoplanarFactor& c) {
                           return (c.kind == LandmarkKind::Point &&
                                   !w.points.count(c.landmark_id)) ||
                                  (c.kind == LandmarkKind::Line &&
                                   !w.lines.count(c.landmark_id));
                       }),
        w.coplanar.end());
    w.frames.erase(w.frames.begin());
    if (!w.frames.empty()) w.frames.front().preint.reset();
}

// ---- plane lifecycle -----------------------------------------------------

void cull_planes(SlidingWindow& w, const WindowConfig& cfg) {
    std::map<int, int> active;
    for (const auto& fac : w.coplanar) {
        const bool live = fac.kind == LandmarkKind::Point
                              ? (w.points.count(fac.landmark_id) &&
                                 w.points.at(fac.landmark_id).initialized)
                              : (w.lines.count(fac.landmark_id) &&
                                 w.lines.at(fac.landmark_id).initialized);
        if (live) active[fac.plane_id] += 1;
    }
    std::vector<int> dead;
    for (const auto& [id, pl] : w.planes) {
        if (active[id] < cfg.plane_cull_threshold) dead.push_back(id);
    }
    for (int id : dead) {
        w.planes.erase(id);
        w.coplanar.erase(std::remove_if(w.coplanar.begin(), w.coplanar.end(),
                                        [id](const CoplanarFactor& c) {
                                            return c.plane_id == id;
                                        }),
                         w.coplanar.end());
    }
}

std::vector<int> reset_outlier_lines(SlidingWindow& w, const WindowConfig& cfg) {
    constexpr double kMaxMeanSq = 25.0;  // vs ~2 expected at the noise level
    const double inv_sigma = 1.0 / cfg.noise.reproj_sigma();
    std::vector<int> reset;
    for (auto& [id, ln] : w.lines) {
        if (!ln.initialized) continue;
        double sum_sq = 0.0;
        int n = 0;
        for (const auto& [fid, seg] : ln.obs) {
            const Keyframe* f = w.frame_by_id(fid);
            if (!f) continue;
            LineReprojFactor fac;
            fac.frame = fid;
            fac.line_id = id;
            fac.s = seg.first;
            fac.e = seg.second;
            const LineReprojEval e = line_reproj_residual(f->x, ln.line_w, fac, cfg.T_bc);
            if (e.degenerate) continue;
            sum_sq += (e.residual * inv_sigma).squaredNorm();
            ++n;
        }
        if (n == 0 || sum_sq / n > kMaxMeanSq) {
            ln.initialized = false;
            reset.push_back(id);
        }
    }
    return reset;
}

std::vector<int> deassociate_outliers(SlidingWindow& w, const WindowConfig& cfg, MeshMap* mesh) {
    std::vector<int> removed;
    std::vector<CoplanarFactor> kept;
    kept.reserve(w.coplanar.size());
    for (const auto& fac : w.coplanar) {
        const auto pit = w.planes.find(fac.plane_id);
        if (pit == w.planes.end()) continue;
        bool keep = true;
        if (fac.kind == LandmarkKind::Point) {
            const auto it = w.points.find(fac.landmark_id);
            if (it != w.points.end() && it->second.initialized) {
                const auto pos = point_position_world(w, cfg, it->second);
                if (pos &&
                    std::abs(pit->second.pi.point_distance(*pos)) > cfg.deassoc_dist) {
                    keep = false;
                }
            }
        } else {
            const auto it = w.lines.find(fac.landmark_id);
            if (it != w.lines.end() && it->second.initialized) {
                const auto ep = line_endpoints_world(w, cfg, it->second);
                if (ep && std::max(std::abs(pit->second.pi.point_distance((*ep)[0])),
                                   std::abs(pit->second.pi.point_distance((*ep)[1]))) >
                              cfg.deassoc_dist) {
                    keep = false;
                }
            }
        }
        if (keep) {
            kept.push_back(fac);
        } else {
            removed.push_back(fac.landmark_id);
            if (mesh) {
                const bool is_point = fac.kind == LandmarkKind::Point;
                const int id = fac.landmark_id;
                remove_patches_referencing(*mesh, [&](const VertexRef& r) {
                    return r.id == id && (r.kind == VertexRef::Kind::Point) == is_point;
                });
            }
        }
    }
    w.coplanar = std::move(kept);
    return removed;
}

}  // namespace plpvio
