#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace plpvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return m;
}

inline Mat3 exp_so3(const Vec3& phi) {
    const double theta = phi.norm();
    if (theta < 1e-10) {
        return Mat3::Identity() + skew(phi);
    }
    const Vec3 a = phi / theta;
    const double c = std::cos(theta), s = std::sin(theta);
    return c * Mat3::Identity() + (1.0 - c) * a * a.transpose() + s * skew(a);
}

inline Vec3 log_so3(const Mat3& R) {
    const double tr = std::min(3.0, std::max(-1.0, R.trace()));
    const double cos_theta = 0.5 * (tr - 1.0);
    const double theta = std::acos(std::min(1.0, std::max(-1.0, cos_theta)));
    Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (theta < 1e-8) {
        return 0.5 * w;
    }
    if (theta > M_PI - 1e-6) {
        // near pi: extract axis from R + I
        Mat3 A = 0.5 * (R + Mat3::Identity());
        int k = 0;
        A.diagonal().maxCoeff(&k);
        Vec3 axis = A.col(k) / std::sqrt(std::max(A(k, k), 1e-12));
        axis.normalize();
        if (w.dot(axis) < 0) axis = -axis;
        return theta * axis;
    }
    return 0.5 * theta / std::sin(theta) * w;
}

inline Quat small_angle_quat(const Vec3& half_theta_vec) {
    Quat q(1.0, half_theta_vec.x(), half_theta_vec.y(), half_theta_vec.z());
    q.normalize();
    return q;
}

inline Quat quat_exp(const Vec3& phi) {
    const double theta = phi.norm();
    if (theta < 1e-10) {
        return small_angle_quat(0.5 * phi);
    }
    const Vec3 a = phi / theta;
    const double half = 0.5 * theta;
    Quat q;
    q.w() = std::cos(half);
    q.vec() = std::sin(half) * a;
    return q;
}

// 4x4 left/right quaternion product matrices, [w, x, y, z] ordering
inline Eigen::Matrix4d quat_left(const Quat& q) {
    Eigen::Matrix4d m;
    m(0, 0) = q.w();
    m.block<1, 3>(0, 1) = -q.vec().transpose();
    m.block<3, 1>(1, 0) = q.vec();
    m.block<3, 3>(1, 1) = q.w() * Mat3::Identity() + skew(q.vec());
    return m;
}

inline Eigen::Matrix4d quat_right(const Quat& q) {
    Eigen::Matrix4d m;
    m(0, 0) = q.w();
    m.block<1, 3>(0, 1) = -q.vec().transpose();
    m.block<3, 1>(1, 0) = q.vec();
    m.block<3, 3>(1, 1) = q.w() * Mat3::Identity() - skew(q.vec());
    return m;
}

inline double deg2rad(double d) { return d * M_PI / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / M_PI; }

constexpr double kGravityMagnitude = 9.81;
inline Vec3 gravity_world() { return Vec3(0.0, 0.0, -kGravityMagnitude); }

}  // namespace plpvio
