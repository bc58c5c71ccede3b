#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include "plpvio/factors.hpp"
#include "test_util.hpp"

using namespace plpvio;
using testing::Rng;
using testing::numeric_jacobian;
using testing::rel_error;

namespace {

// constant world acceleration + constant body rate, exact closed-form states
struct MotionSeg {
    Vec3 p0 = Vec3(1, 2, 0.5), v0 = Vec3(0.3, -0.2, 0.1), a0 = Vec3(0.2, 0.1, -0.3);
    Vec3 omega = Vec3(0.2, -0.1, 0.3);
    Quat q0 = quat_exp(Vec3(0.1, 0.2, -0.1));

    ImuState state(double t) const {
        ImuState x;
        x.pose.p = p0 + v0 * t + 0.5 * a0 * t * t;
        x.pose.q = (q0 * quat_exp(omega * t)).normalized();
        x.v = v0 + a0 * t;
        return x;
    }
    Vec3 acc_body(double t) const {
        return state(t).pose.q.conjugate() * (a0 - gravity_world());
    }
};

Preintegration integrate_motion(const MotionSeg& m, double t0, double t1, double dt,
                                const ImuNoise& noise, const Vec3& ba = Vec3::Zero(),
                                const Vec3& bg = Vec3::Zero()) {
    Preintegration pre(m.acc_body(t0) + ba, m.omega + bg, Vec3::Zero(), Vec3::Zero(), noise);
    for (double t = t0; t + dt <= t1 + 1e-12; t += dt) {
        pre.integrate(dt, m.acc_body(t + dt) + ba, m.omega + bg);
    }
    return pre;
}

}  // namespace

TEST_CASE("noise-free constant-rate motion gives zero residual") {
    MotionSeg m;
    ImuNoise noise;
    const Preintegration pre = integrate_motion(m, 0.0, 0.1, 1e-3, noise);
    const ImuState xi = m.state(0.0), xj = m.state(0.1);
    const auto eval = imu_residual(xi, xj, pre);
    // check the raw (unwhitened) residual through a unit-noise whitening
    CHECK((pre.delta_q().conjugate() *
           (xi.pose.q.conjugate() * xj.pose.q)).vec().norm() < 1e-8);
    const Vec3 rp = xi.pose.R().transpose() *
                        (xj.pose.p - xi.pose.p - xi.v * 0.1 - 0.5 * gravity_world() * 0.01) -
                    pre.delta_p();
    CHECK(rp.norm() < 1e-8);
    CHECK(eval.residual.allFinite());
}

TEST_CASE("covariance is symmetric positive definite") {
    MotionSeg m;
    ImuNoise noise;
    const Preintegration pre = integrate_motion(m, 0.0, 0.2, 5e-3, noise);
    const auto& cov = pre.covariance();
    CHECK((cov - cov.transpose()).norm() < 1e-12 * cov.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 15, 15>> es(cov);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("first-order bias correction vs re-integration oracle") {
    MotionSeg m;
    ImuNoise noise;
    for (double mag : {1e-4, 2e-4, 4e-4}) {
        const Vec3 dbg = mag * Vec3(1, -0.5, 0.8).normalized();
        // first-order corrected delta rotation at bias lin_bg + dbg
        Preintegration pre = integrate_motion(m, 0.0, 0.1, 1e-3, noise);
        const Quat g1 = (pre.delta_q() * small_angle_quat(0.5 * pre.dq_dbg() * dbg)).normalized();
        // oracle: exact re-integration at the shifted bias
        Preintegration pre2 = integrate_motion(m, 0.0, 0.1, 1e-3, noise);
        pre2.repropagate(Vec3::Zero(), dbg);
        const Quat g2 = pre2.delta_q();
        const double err = (g1.conjugate() * g2).vec().norm();
        // second order in the bias perturbation
        CHECK(err < 10.0 * mag * mag + 1e-12);
    }
}

TEST_CASE("imu jacobians vs central finite differences") {
    Rng rng(31);
    ImuNoise noise;
    for (int trial = 0; trial < 100; ++trial) {
        MotionSeg m;
        m.p0 = rng.vec3(-2, 2);
        m.v0 = rng.vec3(-1, 1);
        m.a0 = rng.vec3(-1, 1);
        m.omega = rng.vec3(-0.5, 0.5);
        m.q0 = rng.quat();
        const Preintegration pre = integrate_motion(m, 0.0, 0.1, 2e-3, noise);

        // perturb away from consistency so the residual is nonzero
        ImuState xi = m.state(0.0), xj = m.state(0.1);
        xi.pose.retract(0.01 * rng.vec3(-1, 1), 0.01 * rng.vec3(-1, 1));
        xj.v += 0.02 * rng.vec3(-1, 1);
        xi.ba = 0.01 * rng.vec3(-1, 1);
        xi.bg = 0.002 * rng.vec3(-1, 1);

        const auto eval = imu_residual(xi, xj, pre);
        auto f = [&](const VecX& d) -> VecX {
            const ImuState a = testing::retract_state(xi, d.head<15>());
            const ImuState b = testing::retract_state(xj, d.tail<15>());
            return imu_residual(a, b, pre).residual;
        };
        const MatX J_num = numeric_jacobian(f, 30, 1e-6);
        MatX J_ana(15, 30);
        J_ana.block<15, 6>(0, 0) = eval.J_pose_i;
        J_ana.block<15, 9>(0, 6) = eval.J_sb_i;
        J_ana.block<15, 6>(0, 15) = eval.J_pose_j;
        J_ana.block<15, 9>(0, 21) = eval.J_sb_j;
        CHECK(rel_error(J_ana, J_num) < 1e-3);
    }
}
