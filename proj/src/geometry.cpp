#include "plpvio/geometry.hpp"

#include <Eigen/Dense>

namespace plpvio {

namespace {

// axis index with the smallest-magnitude component, first index wins ties
int smallest_component(const Vec3& v) {
    int k = 0;
    double best = std::abs(v[0]);
    for (int i = 1; i < 3; ++i) {
        if (std::abs(v[i]) < best) {
            best = std::abs(v[i]);
            k = i;
        }
    }
    return k;
}

}  // namespace

PlaneParam PlaneParam::from_nd(const Vec3& n, double d) {
    PlaneParam pi;
    const double nn = n.norm();
    pi.n = n / nn;
    pi.d = d / nn;
    auto [b1, b2] = plane_tangent_basis(pi.n);
    pi.b1 = b1;
    pi.b2 = b2;
    return pi;
}

std::pair<Vec3, Vec3> plane_tangent_basis(const Vec3& n_bar) {
    const int k = smallest_component(n_bar);
    Vec3 e = Vec3::Zero();
    e[k] = 1.0;
    Vec3 b1 = e - n_bar * n_bar[k];
    b1.normalize();
    Vec3 b2 = n_bar.cross(b1);
    return {b1, b2};
}

PlaneParam plane_update(const PlaneParam& pi, double w1, double w2, double delta_d) {
    const Vec3 n_new = (pi.n + w1 * pi.b1 + w2 * pi.b2).normalized();
    return PlaneParam::from_nd(n_new, pi.d + delta_d);
}

PluckerLine plucker_transform(const PluckerLine& line, const Pose& T) {
    const Mat3 R = T.R();
    PluckerLine out;
    out.d = R * line.d;
    out.n = R * line.n + T.p.cross(out.d);
    return out;
}

PluckerLine plucker_from_points(const Vec3& p1, const Vec3& p2) {
    PluckerLine line;
    line.d = p2 - p1;
    line.n = p1.cross(line.d);
    return line;
}

OrthonormalLine plucker_to_orthonormal(const PluckerLine& line) {
    OrthonormalLine o;
    const double nn = line.n.norm();
    const double dn = line.d.norm();
    const Vec3 cross = line.n.cross(line.d);

    if (cross.norm() < 1e-12) {
        // line through the origin (n = 0): complete the frame deterministically
        const Vec3 dhat = line.d / dn;
        const int k = smallest_component(dhat);
        Vec3 e = Vec3::Zero();
        e[k] = 1.0;
        Vec3 u1 = (e - dhat * dhat[k]).normalized();
        o.U.col(0) = u1;
        o.U.col(1) = dhat;
        o.U.col(2) = u1.cross(dhat);
    } else {
        o.U.col(0) = line.n / nn;
        o.U.col(1) = line.d / dn;
        o.U.col(2) = cross / cross.norm();
    }
    const double scale = std::sqrt(nn * nn + dn * dn);
    const double c = nn / scale, s = dn / scale;
    o.W << c, -s, s, c;
    return o;
}

PluckerLine orthonormal_to_plucker(const OrthonormalLine& o) {
    PluckerLine line;
    line.n = o.w1() * o.U.col(0);
    line.d = o.w2() * o.U.col(1);
    return line;
}

OrthonormalLine orthonormal_update(const OrthonormalLine& o, const Vec4& delta) {
    OrthonormalLine out;
    Mat3 U = o.U * exp_so3(delta.head<3>());
    out.U = Quat(U).normalized().toRotationMatrix();
    const double phi = std::atan2(o.w2(), o.w1()) + delta[3];
    const double c = std::cos(phi), s = std::sin(phi);
    out.W << c, -s, s, c;
    return out;
}

std::optional<LineEndpoints> line_endpoints_3d(const PluckerLine& line_c,
                                               const Vec3& obs_start,
                                               const Vec3& obs_end) {
    const Vec3 dhat = line_c.d.normalized();
    const Vec3 p0 = line_c.closest_point_to_origin();
    const double cos_gate = std::cos(deg2rad(1.0));

    auto intersect = [&](const Vec3& z) -> std::optional<Vec3> {
        const Vec3 zhat = z.normalized();
        if (std::abs(zhat.dot(dhat)) > cos_gate) {
            return std::nullopt;
        }
        // min_{t,s} | t z - s d - p0 |^2, point on line = p0 + s d
        Eigen::Matrix<double, 3, 2> A;
        A.col(0) = z;
        A.col(1) = -line_c.d;
        const Vec2 ts = A.colPivHouseholderQr().solve(p0);
        return p0 + ts[1] * line_c.d;
    };

    auto ps = intersect(obs_start);
    auto pe = intersect(obs_end);
    if (!ps || !pe) {
        return std::nullopt;
    }
    return LineEndpoints{*ps, *pe};
}

}  // namespace plpvio
