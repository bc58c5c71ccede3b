#include "plpvio/imu.hpp"

#include <Eigen/Dense>

namespace plpvio {

Preintegration::Preintegration(const Vec3& acc0, const Vec3& gyr0,
                               const Vec3& ba, const Vec3& bg, const ImuNoise& noise)
    : noise_(noise), acc_prev_(acc0), gyr_prev_(gyr0),
      lin_ba_(ba), lin_bg_(bg), acc_first_(acc0), gyr_first_(gyr0) {}

void Preintegration::integrate(double dt, const Vec3& acc, const Vec3& gyr) {
    dt_buf_.push_back(dt);
    acc_buf_.push_back(acc);
    gyr_buf_.push_back(gyr);
    midpoint_step(dt, acc, gyr);
}

void Preintegration::repropagate(const Vec3& ba, const Vec3& bg) {
    lin_ba_ = ba;
    lin_bg_ = bg;
    acc_prev_ = acc_first_;
    gyr_prev_ = gyr_first_;
    sum_dt_ = 0.0;
    delta_p_.setZero();
    delta_v_.setZero();
    delta_q_.setIdentity();
    jacobian_.setIdentity();
    covariance_.setZero();
    for (size_t i = 0; i < dt_buf_.size(); ++i) {
        midpoint_step(dt_buf_[i], acc_buf_[i], gyr_buf_[i]);
    }
}

void Preintegration::midpoint_step(double dt, const Vec3& acc1, const Vec3& gyr1) {
    const Vec3 un_gyr = 0.5 * (gyr_prev_ + gyr1) - lin_bg_;
    const Vec3 un_acc_0 = delta_q_ * (acc_prev_ - lin_ba_);
    const Quat dq_new = (delta_q_ * small_angle_quat(0.5 * un_gyr * dt)).normalized();
    const Vec3 un_acc_1 = dq_new * (acc1 - lin_ba_);
    const Vec3 un_acc = 0.5 * (un_acc_0 + un_acc_1);

    const Vec3 dp_new = delta_p_ + delta_v_ * dt + 0.5 * un_acc * dt * dt;
    const Vec3 dv_new = delta_v_ + un_acc * dt;

    const Mat3 R0 = delta_q_.toRotationMatrix();
    const Mat3 R1 = dq_new.toRotationMatrix();
    const Mat3 wx = skew(un_gyr);
    const Mat3 a0x = skew(acc_prev_ - lin_ba_);
    const Mat3 a1x = skew(acc1 - lin_ba_);
    const Mat3 I = Mat3::Identity();

    Eigen::Matrix<double, 15, 15> F = Eigen::Matrix<double, 15, 15>::Identity();
    F.block<3, 3>(0, 3) = -0.25 * R0 * a0x * dt * dt - 0.25 * R1 * a1x * (I - wx * dt) * dt * dt;
    F.block<3, 3>(0, 6) = I * dt;
    F.block<3, 3>(0, 9) = -0.25 * (R0 + R1) * dt * dt;
    F.block<3, 3>(0, 12) = 0.25 * R1 * a1x * dt * dt * dt;
    F.block<3, 3>(3, 3) = I - wx * dt;
    F.block<3, 3>(3, 12) = -I * dt;
    F.block<3, 3>(6, 3) = -0.5 * R0 * a0x * dt - 0.5 * R1 * a1x * (I - wx * dt) * dt;
    F.block<3, 3>(6, 9) = -0.5 * (R0 + R1) * dt;
    F.block<3, 3>(6, 12) = 0.5 * R1 * a1x * dt * dt;

    // noise order: [na0, nw0, na1, nw1, nba, nbg]
    Eigen::Matrix<double, 15, 18> V = Eigen::Matrix<double, 15, 18>::Zero();
    V.block<3, 3>(0, 0) = 0.25 * R0 * dt * dt;
    V.block<3, 3>(0, 3) = -0.125 * R1 * a1x * dt * dt * dt;
    V.block<3, 3>(0, 6) = 0.25 * R1 * dt * dt;
    V.block<3, 3>(0, 9) = V.block<3, 3>(0, 3);
    V.block<3, 3>(3, 3) = 0.5 * I * dt;
    V.block<3, 3>(3, 9) = 0.5 * I * dt;
    V.block<3, 3>(6, 0) = 0.5 * R0 * dt;
    V.block<3, 3>(6, 3) = -0.25 * R1 * a1x * dt * dt;
    V.block<3, 3>(6, 6) = 0.5 * R1 * dt;
    V.block<3, 3>(6, 9) = V.block<3, 3>(6, 3);
    V.block<3, 3>(9, 12) = I * dt;
    V.block<3, 3>(12, 15) = I * dt;

    // discrete per-sample variances from continuous densities
    Eigen::Matrix<double, 18, 18> Q = Eigen::Matrix<double, 18, 18>::Zero();
    const double an2 = noise_.acc_n * noise_.acc_n / dt;
    const double gn2 = noise_.gyr_n * noise_.gyr_n / dt;
    const double aw2 = noise_.acc_w * noise_.acc_w / dt;
    const double gw2 = noise_.gyr_w * noise_.gyr_w / dt;
    Q.diagonal() << an2, an2, an2, gn2, gn2, gn2, an2, an2, an2, gn2, gn2, gn2,
        aw2, aw2, aw2, gw2, gw2, gw2;

    jacobian_ = F * jacobian_;
    covariance_ = F * covariance_ * F.transpose() + V * Q * V.transpose();

    delta_p_ = dp_new;
    delta_v_ = dv_new;
    delta_q_ = dq_new;
    sum_dt_ += dt;
    acc_prev_ = acc1;
    gyr_prev_ = gyr1;
}

Eigen::Matrix<double, 15, 15> Preintegration::sqrt_info() const {
    Eigen::Matrix<double, 15, 15> cov = covariance_;
    // guard against a zero-noise configuration producing a singular covariance
    cov.diagonal().array() += 1e-16;
    return Eigen::LLT<Eigen::Matrix<double, 15, 15>>(cov.inverse()).matrixL().transpose();
}

}  // namespace plpvio
