#pragma once

#include "plpvio/geometry.hpp"
#include "plpvio/imu.hpp"

namespace plpvio {

struct NoiseModel {
    double pixel_sigma = 1.0;     // px
    double focal = 460.0;         // px, converts pixel sigma to the normalized plane
    double plane_dist_sigma = 0.01;              // m
    double plane_angle_sigma = deg2rad(1.0);     // rad

    double reproj_sigma() const { return pixel_sigma / focal; }
};

struct PointReprojFactor {
    int frame_i = -1;  // anchor keyframe
    int frame_j = -1;
    Vec3 obs_i = Vec3(0, 0, 1);
    Vec3 obs_j = Vec3(0, 0, 1);
    int point_id = -1;
};

struct LineReprojFactor {
    int frame = -1;
    int line_id = -1;
    Vec3 s = Vec3(0, 0, 1);
    Vec3 e = Vec3(0, 0, 1);

    double seg_len() const { return (s - e).norm(); }
};

enum class LandmarkKind { Point, Line };

struct CoplanarFactor {
    int plane_id = -1;
    int landmark_id = -1;
    LandmarkKind kind = LandmarkKind::Point;
};

// ---- point re-projection -------------------------------------------------

struct PointWorldEval {
    Vec3 f_w;
    Mat3 J_dp;      // d f_w / d delta_p_i
    Mat3 J_dtheta;  // d f_w / d delta_theta_i
    Vec3 J_lambda;
};

PointWorldEval point_world(const ImuState& x_i, const Vec3& obs_i, double lambda,
                           const Pose& T_bc);

struct PointReprojEval {
    bool behind_camera = false;
    Vec2 residual = Vec2::Zero();
    Eigen::Matrix<double, 2, 6> J_pose_i = Eigen::Matrix<double, 2, 6>::Zero();
    Eigen::Matrix<double, 2, 6> J_pose_j = Eigen::Matrix<double, 2, 6>::Zero();
    Vec2 J_lambda = Vec2::Zero();
};

PointReprojEval point_reproj_residual(const ImuState& x_i, const ImuState& x_j,
                                      double lambda, const PointReprojFactor& factor,
                                      const Pose& T_bc);

// ---- line re-projection --------------------------------------------------

// signed distance from normalized-plane endpoint s to the projected line n
double point_line_distance(const Vec3& s, const Vec3& n_proj);

struct LineReprojEval {
    bool degenerate = false;
    Vec2 residual = Vec2::Zero();
    Eigen::Matrix<double, 2, 6> J_pose = Eigen::Matrix<double, 2, 6>::Zero();
    Eigen::Matrix<double, 2, 4> J_line = Eigen::Matrix<double, 2, 4>::Zero();
};

LineReprojEval line_reproj_residual(const ImuState& x, const OrthonormalLine& line_w,
                                    const LineReprojFactor& factor, const Pose& T_bc);

// 6x4 Jacobian of the representative Plucker coordinates w.r.t. the 4-DoF chart
Eigen::Matrix<double, 6, 4> plucker_chart_jacobian(const OrthonormalLine& o);

// ---- co-planarity --------------------------------------------------------

struct PointOnPlaneEval {
    double residual = 0.0;
    Vec3 J_plane = Vec3::Zero();  // d r / d (w1, w2, delta_d)
    Vec3 J_point = Vec3::Zero();  // d r / d f (world)
};

PointOnPlaneEval point_on_plane_residual(const Vec3& f, const PlaneParam& pi);

struct LineOnPlaneEval {
    Vec2 residual = Vec2::Zero();
    Eigen::Matrix<double, 2, 3> J_plane = Eigen::Matrix<double, 2, 3>::Zero();
    Eigen::Matrix<double, 2, 4> J_line = Eigen::Matrix<double, 2, 4>::Zero();
};

LineOnPlaneEval line_on_plane_residual(const OrthonormalLine& line_w, const PlaneParam& pi);

// ---- IMU -----------------------------------------------------------------

struct ImuFactorEval {
    Eigen::Matrix<double, 15, 1> residual;
    Eigen::Matrix<double, 15, 6> J_pose_i, J_pose_j;
    Eigen::Matrix<double, 15, 9> J_sb_i, J_sb_j;  // [dv, dba, dbg]
};

// Whitened pre-integration residual between consecutive keyframes.
ImuFactorEval imu_residual(const ImuState& x_i, const ImuState& x_j,
                           const Preintegration& preint);

// ---- robust loss ---------------------------------------------------------

struct LossEval {
    double rho = 0.0;
    double rho1 = 1.0;
    double rho2 = 0.0;
};

// Cauchy: rho(s) = c^2 log(1 + s / c^2)
LossEval cauchy_weight(double squared_norm, double scale);

// Triggs-style corrector: scale a whitened residual block and its Jacobians
// so that the Gauss-Newton approximation of the robustified cost is exact
// to first order (rho2 <= 0 falls back to sqrt(rho1) reweighting).
struct RobustCorrector {
    double sqrt_rho1 = 1.0;
    double residual_scaling = 1.0;
    double alpha_sq_norm = 0.0;

    RobustCorrector(const LossEval& loss, double squared_norm);

    template <typename ResT, typename JacT>
    void apply(ResT& residual, JacT& jacobian) const {
        if (alpha_sq_norm != 0.0) {
            jacobian = sqrt_rho1 *
                       (jacobian - alpha_sq_norm * residual * (residual.transpose() * jacobian));
        } else {
            jacobian *= sqrt_rho1;
        }
        residual *= residual_scaling;
    }

    template <typename ResT>
    void apply_residual(ResT& residual) const {
        residual *= residual_scaling;
    }
};

}  // namespace plpvio
