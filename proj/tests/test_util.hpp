#pragma once

#include <functional>
#include <random>

#include "plpvio/geometry.hpp"

namespace plpvio::testing {

// central finite differences of f : R^n -> R^m around zero perturbation
inline MatX numeric_jacobian(const std::function<VecX(const VecX&)>& f,
                             int n, double step = 1e-6) {
    const VecX f0 = f(VecX::Zero(n));
    MatX J(f0.size(), n);
    for (int i = 0; i < n; ++i) {
        VecX dp = VecX::Zero(n);
        dp[i] = step;
        const VecX fp = f(dp);
        dp[i] = -step;
        const VecX fm = f(dp);
        J.col(i) = (fp - fm) / (2.0 * step);
    }
    return J;
}

inline double rel_error(const MatX& analytic, const MatX& numeric) {
    const double scale = std::max(1.0, numeric.norm());
    return (analytic - numeric).norm() / scale;
}

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(unsigned seed) : gen(seed) {}

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * (gen() >> 11) * (1.0 / 9007199254740992.0);
    }
    Vec3 vec3(double lo, double hi) {
        return Vec3(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi));
    }
    Quat quat() {
        const Vec3 axis = vec3(-1, 1).normalized();
        return quat_exp(uniform(0, 2.5) * axis);
    }
    Pose pose(double span = 2.0) { return Pose(vec3(-span, span), quat()); }
};

inline ImuState random_state(Rng& rng) {
    ImuState x;
    x.pose = rng.pose();
    x.v = rng.vec3(-1, 1);
    x.ba = rng.vec3(-0.05, 0.05);
    x.bg = rng.vec3(-0.01, 0.01);
    return x;
}

inline ImuState retract_state(const ImuState& x, const VecX& d) {
    ImuState out = x;
    out.pose.retract(d.segment<3>(0), d.segment<3>(3));
    out.v += d.segment<3>(6);
    out.ba += d.segment<3>(9);
    out.bg += d.segment<3>(12);
    return out;
}

}  // namespace plpvio::testing
