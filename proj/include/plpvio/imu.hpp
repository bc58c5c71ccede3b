#pragma once

#include <vector>

#include "plpvio/geometry.hpp"

namespace plpvio {

// Continuous-time noise densities (per sqrt(Hz)) and bias random walks.
struct ImuNoise {
    double acc_n = 2e-3;
    double gyr_n = 1.7e-4;
    double acc_w = 1e-4;
    double gyr_w = 1e-5;
};

struct ImuSample {
    double t = 0.0;
    Vec3 gyr = Vec3::Zero();
    Vec3 acc = Vec3::Zero();
};

// Mid-point pre-integration between consecutive keyframes with 15x15
// covariance propagation and first-order bias Jacobians.
// Error-state ordering: [dp, dtheta, dv, dba, dbg].
class Preintegration {
public:
    Preintegration(const Vec3& acc0, const Vec3& gyr0,
                   const Vec3& ba, const Vec3& bg, const ImuNoise& noise);

    void integrate(double dt, const Vec3& acc, const Vec3& gyr);

    double sum_dt() const { return sum_dt_; }
    const Vec3& delta_p() const { return delta_p_; }
    const Vec3& delta_v() const { return delta_v_; }
    const Quat& delta_q() const { return delta_q_; }
    const Vec3& lin_ba() const { return lin_ba_; }
    const Vec3& lin_bg() const { return lin_bg_; }

    const Eigen::Matrix<double, 15, 15>& covariance() const { return covariance_; }
    const Eigen::Matrix<double, 15, 15>& jacobian() const { return jacobian_; }

    Mat3 dp_dba() const { return jacobian_.block<3, 3>(0, 9); }
    Mat3 dp_dbg() const { return jacobian_.block<3, 3>(0, 12); }
    Mat3 dq_dbg() const { return jacobian_.block<3, 3>(3, 12); }
    Mat3 dv_dba() const { return jacobian_.block<3, 3>(6, 9); }
    Mat3 dv_dbg() const { return jacobian_.block<3, 3>(6, 12); }

    // Upper-triangular whitening matrix: sqrt of the information matrix.
    Eigen::Matrix<double, 15, 15> sqrt_info() const;

    // Re-run the integration with a new bias linearization point.
    void repropagate(const Vec3& ba, const Vec3& bg);

private:
    void midpoint_step(double dt, const Vec3& acc1, const Vec3& gyr1);

    ImuNoise noise_;
    Vec3 acc_prev_, gyr_prev_;
    Vec3 lin_ba_, lin_bg_;

    double sum_dt_ = 0.0;
    Vec3 delta_p_ = Vec3::Zero();
    Vec3 delta_v_ = Vec3::Zero();
    Quat delta_q_ = Quat::Identity();
    Eigen::Matrix<double, 15, 15> jacobian_ = Eigen::Matrix<double, 15, 15>::Identity();
    Eigen::Matrix<double, 15, 15> covariance_ = Eigen::Matrix<double, 15, 15>::Zero();

    // buffered raw samples for repropagation
    std::vector<double> dt_buf_;
    std::vector<Vec3> acc_buf_, gyr_buf_;
    Vec3 acc_first_, gyr_first_;
};

}  // namespace plpvio
