#pragma once

#include <optional>
#include <stdexcept>
#include <utility>

#include "plpvio/math_util.hpp"

namespace plpvio {

// Rigid body pose. Quaternion is Hamilton convention, stored w-first.
struct Pose {
    Vec3 p = Vec3::Zero();
    Quat q = Quat::Identity();

    Pose() = default;
    Pose(const Vec3& p_, const Quat& q_) : p(p_), q(q_.normalized()) {}

    Mat3 R() const { return q.toRotationMatrix(); }

    Vec3 transform(const Vec3& x) const { return q * x + p; }

    Pose inverse() const {
        Quat qi = q.conjugate();
        return Pose(-(qi * p), qi);
    }

    // this * other: (p + R * other.p, q * other.q)
    Pose operator*(const Pose& other) const {
        return Pose(p + q * other.p, q * other.q);
    }

    // p += dp (world), q <- q * Exp(dtheta) (body-frame perturbation)
    void retract(const Vec3& dp, const Vec3& dtheta) {
        p += dp;
        q = (q * quat_exp(dtheta)).normalized();
    }

    static Pose Identity() { return Pose(); }
};

struct ImuState {
    Pose pose;
    Vec3 v = Vec3::Zero();
    Vec3 ba = Vec3::Zero();
    Vec3 bg = Vec3::Zero();
};

// Point landmark anchored to the first observing keyframe.
struct InverseDepthPoint {
    int anchor_frame = -1;
    Vec3 obs0 = Vec3(0, 0, 1);  // normalized-plane bearing [u, v, 1]
    double lambda = 0.0;        // inverse depth, 1/m
    bool valid = false;

    double depth() const { return 1.0 / lambda; }
};

constexpr double kMinDepth = 0.05;
constexpr double kMaxDepth = 200.0;

inline bool depth_in_range(double depth) {
    return depth >= kMinDepth && depth <= kMaxDepth;
}

// Plucker line: moment n = p x d for any point p on the line, direction d.
struct PluckerLine {
    Vec3 n = Vec3::Zero();
    Vec3 d = Vec3::UnitX();

    // closest point on the line to the frame origin
    Vec3 closest_point_to_origin() const { return d.cross(n) / d.squaredNorm(); }
};

// Minimal 4-DoF line chart: U in SO(3), W in SO(2).
struct OrthonormalLine {
    Mat3 U = Mat3::Identity();
    Mat2 W = Mat2::Identity();

    double w1() const { return W(0, 0); }
    double w2() const { return W(1, 0); }
};

struct PlaneParam {
    Vec3 n = Vec3::UnitZ();
    double d = 0.0;
    Vec3 b1 = Vec3::UnitX();
    Vec3 b2 = Vec3::UnitY();

    static PlaneParam from_nd(const Vec3& n, double d);

    double point_distance(const Vec3& f) const { return n.dot(f) - d; }
};

// {b1, b2, n_bar} right-handed orthonormal triad, deterministic in n_bar.
std::pair<Vec3, Vec3> plane_tangent_basis(const Vec3& n_bar);

// n <- normalize(n_bar + w1 b1 + w2 b2), d <- d + delta_d, basis recomputed.
PlaneParam plane_update(const PlaneParam& pi, double w1, double w2, double delta_d);

// 6x6 line motion applied to [n; d]; T maps source-frame points into target frame.
PluckerLine plucker_transform(const PluckerLine& line, const Pose& T);

// Plucker line from two 3D points.
PluckerLine plucker_from_points(const Vec3& p1, const Vec3& p2);

OrthonormalLine plucker_to_orthonormal(const PluckerLine& line);

// Representative Plucker coordinates [w1 * u1; w2 * u2] (unit 6-vector).
PluckerLine orthonormal_to_plucker(const OrthonormalLine& o);

// U <- U * Exp(delta[0:3]), W <- W * Rot2(delta[3]).
OrthonormalLine orthonormal_update(const OrthonormalLine& o, const Vec4& delta);

struct LineEndpoints {
    Vec3 start;
    Vec3 end;
};

// Intersect the back-projection rays of the observed segment endpoints with
// the 3D line (camera frame). Returns nullopt when a ray is within 1 deg of
// the line direction (unstable endpoint, discarded for plane statistics).
std::optional<LineEndpoints> line_endpoints_3d(const PluckerLine& line_c,
                                               const Vec3& obs_start,
                                               const Vec3& obs_end);

}  // namespace plpvio
