#include "plpvio/factors.hpp"

#include <Eigen/Dense>

namespace plpvio {

PointWorldEval point_world(const ImuState& x_i, const Vec3& obs_i, double lambda,
                           const Pose& T_bc) {
    PointWorldEval out;
    const Mat3 R_wbi = x_i.pose.R();
    const Vec3 f_ci = obs_i / lambda;
    const Vec3 f_bi = T_bc.q * f_ci + T_bc.p;
    out.f_w = R_wbi * f_bi + x_i.pose.p;
    out.J_dp = Mat3::Identity();
    out.J_dtheta = -R_wbi * skew(f_bi);
    out.J_lambda = -(R_wbi * (T_bc.q * obs_i)) / (lambda * lambda);
    return out;
}

PointReprojEval point_reproj_residual(const ImuState& x_i, const ImuState& x_j,
                                      double lambda, const PointReprojFactor& factor,
                                      const Pose& T_bc) {
    PointReprojEval out;
    const PointWorldEval pw = point_world(x_i, factor.obs_i, lambda, T_bc);
    const Mat3 R_bc = T_bc.R();
    const Mat3 R_wbj = x_j.pose.R();

    const Vec3 f_bj = R_wbj.transpose() * (pw.f_w - x_j.pose.p);
    const Vec3 f_cj = R_bc.transpose() * (f_bj - T_bc.p);

    const double z = f_cj.z();
    if (z <= 1e-6) {
        out.behind_camera = true;
        return out;
    }
    out.residual << f_cj.x() / z - factor.obs_j.x(), f_cj.y() / z - factor.obs_j.y();

    Eigen::Matrix<double, 2, 3> dr_dfc;
    dr_dfc << 1.0 / z, 0, -f_cj.x() / (z * z),
              0, 1.0 / z, -f_cj.y() / (z * z);

    const Mat3 dfc_dfw = R_bc.transpose() * R_wbj.transpose();
    out.J_pose_i.leftCols<3>() = dr_dfc * dfc_dfw * pw.J_dp;
    out.J_pose_i.rightCols<3>() = dr_dfc * dfc_dfw * pw.J_dtheta;
    out.J_pose_j.leftCols<3>() = -dr_dfc * dfc_dfw;
    out.J_pose_j.rightCols<3>() = dr_dfc * R_bc.transpose() * skew(f_bj);
    out.J_lambda = dr_dfc * dfc_dfw * pw.J_lambda;
    return out;
}

double point_line_distance(const Vec3& s, const Vec3& n_proj) {
    const double rho = std::sqrt(n_proj.x() * n_proj.x() + n_proj.y() * n_proj.y());
    return s.dot(n_proj) / rho;
}

Eigen::Matrix<double, 6, 4> plucker_chart_jacobian(const OrthonormalLine& o) {
    const Vec3 u1 = o.U.col(0), u2 = o.U.col(1), u3 = o.U.col(2);
    const double w1 = o.w1(), w2 = o.w2();
    Eigen::Matrix<double, 6, 4> J = Eigen::Matrix<double, 6, 4>::Zero();
    J.block<3, 1>(0, 1) = -w1 * u3;
    J.block<3, 1>(0, 2) = w1 * u2;
    J.block<3, 1>(0, 3) = -w2 * u1;
    J.block<3, 1>(3, 0) = w2 * u3;
    J.block<3, 1>(3, 2) = -w2 * u1;
    J.block<3, 1>(3, 3) = w1 * u2;
    return J;
}

namespace {

// d of point_line_distance w.r.t. the projected line coefficients
Eigen::Matrix<double, 1, 3> dist_jacobian(const Vec3& s, const Vec3& n) {
    const double rho2 = n.x() * n.x() + n.y() * n.y();
    const double rho = std::sqrt(rho2);
    const double sn = s.dot(n);
    Eigen::Matrix<double, 1, 3> J;
    J << s.x() / rho - n.x() * sn / (rho * rho2),
         s.y() / rho - n.y() * sn / (rho * rho2),
         s.z() / rho;
    return J;
}

}  // namespace

LineReprojEval line_reproj_residual(const ImuState& x, const OrthonormalLine& line_w,
                                    const LineReprojFactor& factor, const Pose& T_bc) {
    LineReprojEval out;
    const PluckerLine L_w = orthonormal_to_plucker(line_w);

    // world -> body
    const Mat3 R_bw = x.pose.R().transpose();
    const Vec3 t_bw = -(R_bw * x.pose.p);
    const Vec3 n_b = R_bw * L_w.n + t_bw.cross(R_bw * L_w.d);
    const Vec3 d_b = R_bw * L_w.d;

    // body -> camera
    const Mat3 R_cb = T_bc.R().transpose();
    const Vec3 t_cb = -(R_cb * T_bc.p);
    const Vec3 n_c = R_cb * n_b + t_cb.cross(R_cb * d_b);

    if (n_c.x() * n_c.x() + n_c.y() * n_c.y() < 1e-16) {
        out.degenerate = true;
        return out;
    }

    const double inv_len = 1.0 / factor.seg_len();
    out.residual << inv_len * point_line_distance(factor.s, n_c),
                    inv_len * point_line_distance(factor.e, n_c);

    Eigen::Matrix<double, 2, 3> dr_dnc;
    dr_dnc.row(0) = inv_len * dist_jacobian(factor.s, n_c);
    dr_dnc.row(1) = inv_len * dist_jacobian(factor.e, n_c);

    const Mat3 dnc_dnb = R_cb;
    const Mat3 dnc_ddb = skew(t_cb) * R_cb;

    // body-frame line w.r.t. pose perturbation
    Eigen::Matrix<double, 3, 6> dnb_dpose, ddb_dpose;
    dnb_dpose.leftCols<3>() = R_bw * skew(L_w.d);
    dnb_dpose.rightCols<3>() = skew(n_b);
    ddb_dpose.leftCols<3>().setZero();
    ddb_dpose.rightCols<3>() = skew(d_b);
    out.J_pose = dr_dnc * (dnc_dnb * dnb_dpose + dnc_ddb * ddb_dpose);

    // chain through the world->camera 6x6 line motion
    const Eigen::Matrix<double, 6, 4> dL_dchart = plucker_chart_jacobian(line_w);
    Eigen::Matrix<double, 3, 6> dnb_dLw;
    dnb_dLw.leftCols<3>() = R_bw;
    dnb_dLw.rightCols<3>() = skew(t_bw) * R_bw;
    Eigen::Matrix<double, 3, 6> ddb_dLw;
    ddb_dLw.leftCols<3>().setZero();
    ddb_dLw.rightCols<3>() = R_bw;
    out.J_line = dr_dnc * (dnc_dnb * dnb_dLw + dnc_ddb * ddb_dLw) * dL_dchart;
    return out;
}

PointOnPlaneEval point_on_plane_residual(const Vec3& f, const PlaneParam& pi) {
    PointOnPlaneEval out;
    out.residual = pi.n.dot(f) - pi.d;
    out.J_plane << pi.b1.dot(f), pi.b2.dot(f), -1.0;
    out.J_point = pi.n;
    return out;
}

LineOnPlaneEval line_on_plane_residual(const OrthonormalLine& line_w, const PlaneParam& pi) {
    LineOnPlaneEval out;
    const PluckerLine L = orthonormal_to_plucker(line_w);
    const double dn2 = L.d.squaredNorm();
    const double dn = std::sqrt(dn2);
    const Vec3 Q = L.d.cross(L.n) / dn2;  // closest point on the line to the origin
    const Vec3 dhat = L.d / dn;

    out.residual << pi.n.dot(Q) - pi.d, pi.n.dot(dhat);

    out.J_plane(0, 0) = pi.b1.dot(Q);
    out.J_plane(0, 1) = pi.b2.dot(Q);
    out.J_plane(0, 2) = -1.0;
    out.J_plane(1, 0) = pi.b1.dot(dhat);
    out.J_plane(1, 1) = pi.b2.dot(dhat);
    out.J_plane(1, 2) = 0.0;

    const Mat3 dQ_dn = skew(L.d) / dn2;
    const Mat3 dQ_dd = -skew(L.n) / dn2 - 2.0 * (L.d.cross(L.n)) * L.d.transpose() / (dn2 * dn2);
    const Mat3 ddhat_dd = (Mat3::Identity() - dhat * dhat.transpose()) / dn;

    Eigen::Matrix<double, 2, 6> dr_dL;
    dr_dL.block<1, 3>(0, 0) = pi.n.transpose() * dQ_dn;
    dr_dL.block<1, 3>(0, 3) = pi.n.transpose() * dQ_dd;
    dr_dL.block<1, 3>(1, 0).setZero();
    dr_dL.block<1, 3>(1, 3) = pi.n.transpose() * ddhat_dd;
    out.J_line = dr_dL * plucker_chart_jacobian(line_w);
    return out;
}

ImuFactorEval imu_residual(const ImuState& x_i, const ImuState& x_j,
                           const Preintegration& preint) {
    ImuFactorEval out;
    const double dt = preint.sum_dt();
    const Vec3 g = gravity_world();
    const Quat qi = x_i.pose.q, qj = x_j.pose.q;
    const Mat3 Ri_t = qi.toRotationMatrix().transpose();

    const Vec3 dba = x_i.ba - preint.lin_ba();
    const Vec3 dbg = x_i.bg - preint.lin_bg();

    const Quat gamma = (preint.delta_q() * small_angle_quat(0.5 * preint.dq_dbg() * dbg)).normalized();
    const Vec3 alpha = preint.delta_p() + preint.dp_dba() * dba + preint.dp_dbg() * dbg;
    const Vec3 beta = preint.delta_v() + preint.dv_dba() * dba + preint.dv_dbg() * dbg;

    Eigen::Matrix<double, 15, 1> r;
    r.segment<3>(0) =
        Ri_t * (x_j.pose.p - x_i.pose.p - x_i.v * dt - 0.5 * g * dt * dt) - alpha;
    r.segment<3>(3) = 2.0 * (gamma.inverse() * (qi.inverse() * qj)).vec();
    r.segment<3>(6) = Ri_t * (x_j.v - x_i.v - g * dt) - beta;
    r.segment<3>(9) = x_j.ba - x_i.ba;
    r.segment<3>(12) = x_j.bg - x_i.bg;

    out.J_pose_i.setZero();
    out.J_pose_j.setZero();
    out.J_sb_i.setZero();
    out.J_sb_j.setZero();

    out.J_pose_i.block<3, 3>(0, 0) = -Ri_t;
    out.J_pose_i.block<3, 3>(0, 3) =
        skew(Ri_t * (x_j.pose.p - x_i.pose.p - x_i.v * dt - 0.5 * g * dt * dt));
    out.J_pose_i.block<3, 3>(3, 3) =
        -(quat_left(qj.inverse() * qi) * quat_right(gamma)).bottomRightCorner<3, 3>();
    out.J_pose_i.block<3, 3>(6, 3) = skew(Ri_t * (x_j.v - x_i.v - g * dt));

    out.J_sb_i.block<3, 3>(0, 0) = -Ri_t * dt;
    out.J_sb_i.block<3, 3>(0, 3) = -preint.dp_dba();
    out.J_sb_i.block<3, 3>(0, 6) = -preint.dp_dbg();
    out.J_sb_i.block<3, 3>(3, 6) =
        -quat_left(qj.inverse() * qi * gamma).bottomRightCorner<3, 3>() * preint.dq_dbg();
    out.J_sb_i.block<3, 3>(6, 0) = -Ri_t;
    out.J_sb_i.block<3, 3>(6, 3) = -preint.dv_dba();
    out.J_sb_i.block<3, 3>(6, 6) = -preint.dv_dbg();
    out.J_sb_i.block<3, 3>(9, 3) = -Mat3::Identity();
    out.J_sb_i.block<3, 3>(12, 6) = -Mat3::Identity();

    out.J_pose_j.block<3, 3>(0, 0) = Ri_t;
    out.J_pose_j.block<3, 3>(3, 3) =
        quat_left(gamma.inverse() * qi.inverse() * qj).bottomRightCorner<3, 3>();

    out.J_sb_j.block<3, 3>(6, 0) = Ri_t;
    out.J_sb_j.block<3, 3>(9, 3) = Mat3::Identity();
    out.J_sb_j.block<3, 3>(12, 6) = Mat3::Identity();

    const Eigen::Matrix<double, 15, 15> S = preint.sqrt_info();
    out.residual = S * r;
    out.J_pose_i = S * out.J_pose_i;
    out.J_pose_j = S * out.J_pose_j;
    out.J_sb_i = S * out.J_sb_i;
    out.J_sb_j = S * out.J_sb_j;
    return out;
}

LossEval cauchy_weight(double squared_norm, double scale) {
    LossEval out;
    const double c2 = scale * scale;
    const double u = 1.0 + squared_norm / c2;
    out.rho = c2 * std::log(u);
    out.rho1 = 1.0 / u;
    out.rho2 = -out.rho1 * out.rho1 / c2;
    return out;
}

RobustCorrector::RobustCorrector(const LossEval& loss, double squared_norm) {
    sqrt_rho1 = std::sqrt(loss.rho1);
    if (squared_norm == 0.0 || loss.rho2 <= 0.0) {
        residual_scaling = sqrt_rho1;
        alpha_sq_norm = 0.0;
        return;
    }
    const double D = 1.0 + 2.0 * squared_norm * loss.rho2 / loss.rho1;
    const double alpha = 1.0 - std::sqrt(std::max(D, 0.0));
    residual_scaling = sqrt_rho1 / (1.0 - alpha);
    alpha_sq_norm = alpha / squared_norm;
}

}  // namespace plpvio
