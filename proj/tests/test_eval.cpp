#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>

#include "plpvio/eval.hpp"
#include "plpvio/sim.hpp"
#include "test_util.hpp"

using namespace plpvio;
using testing::Rng;

namespace {

Trajectory random_traj(Rng& rng, int n, double dt = 0.05) {
    Trajectory out;
    for (int i = 0; i < n; ++i) out.emplace_back(i * dt, rng.pose(3.0));
    return out;
}

Trajectory transformed(const Trajectory& traj, const Pose& T) {
    Trajectory out = traj;
    for (auto& [t, p] : out) p = T * p;
    return out;
}

// independent alignment: SVD of the centered covariance
Pose brute_force_umeyama(const Trajectory& est, const Trajectory& gt) {
    const size_t n = est.size();
    Vec3 mu_e = Vec3::Zero(), mu_g = Vec3::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_e += est[i].second.p;
        mu_g += gt[i].second.p;
    }
    mu_e /= double(n);
    mu_g /= double(n);
    Mat3 C = Mat3::Zero();
    for (size_t i = 0; i < n; ++i) {
        C += (gt[i].second.p - mu_g) * (est[i].second.p - mu_e).transpose();
    }
    Eigen::JacobiSVD<Mat3> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 S = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1;
    const Mat3 R = svd.matrixU() * S * svd.matrixV().transpose();
    return Pose(mu_g - R * mu_e, Quat(R));
}

MeshMap square_mesh(double side, double z) {
    auto ref = [](int id) { return VertexRef{VertexRef::Kind::Point, id, 0}; };
    MeshPatch a, b;
    a.refs = {ref(0), ref(1), ref(2)};
    a.vertices = {Vec3(0, 0, z), Vec3(side, 0, z), Vec3(side, side, z)};
    b.refs = {ref(0), ref(2), ref(3)};
    b.vertices = {Vec3(0, 0, z), Vec3(side, side, z), Vec3(0, side, z)};
    MeshMap m;
    fuse_mesh(m, {a, b});
    return m;
}

std::vector<Vec3> plane_cloud(double side, double spacing) {
    std::vector<Vec3> out;
    for (double x = 0; x <= side + 1e-9; x += spacing) {
        for (double y = 0; y <= side + 1e-9; y += spacing) {
            out.emplace_back(x, y, 0.0);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("identical trajectories give zero APE") {
    Rng rng(1);
    const Trajectory gt = random_traj(rng, 50);
    const auto r = ape_rmse(gt, gt);
    REQUIRE(r);
    CHECK(r->trans_rmse < 1e-12);
    CHECK(r->rot_rmse < 1e-9);
    CHECK(r->n_pairs == 50);
}

TEST_CASE("rigidly transformed estimate aligns back to zero APE") {
    Rng rng(2);
    const Trajectory gt = random_traj(rng, 80);
    const Pose T(Vec3(4, -2, 1), quat_exp(Vec3(0.3, -0.7, 1.1)));
    const auto r = ape_rmse(transformed(gt, T), gt);
    REQUIRE(r);
    CHECK(r->trans_rmse < 1e-10);
    CHECK(r->rot_rmse < 1e-8);
}

TEST_CASE("isotropic 1 cm position noise gives sqrt(3) cm APE") {
    SimRng noise(7);
    Rng rng(3);
    const int n = 10000;
    Trajectory gt = random_traj(rng, n, 0.01);
    Trajectory est = gt;
    for (auto& [t, p] : est) p.p += 0.01 * noise.gaussian3();
    const auto r = ape_rmse(est, gt);
    REQUIRE(r);
    const double expected = 0.01 * std::sqrt(3.0);
    CHECK(r->trans_rmse > expected * 0.95);
    CHECK(r->trans_rmse < expected * 1.05);
}

TEST_CASE("alignment matches a brute-force Umeyama solution") {
    Rng rng(4);
    SimRng noise(11);
    const Trajectory gt = random_traj(rng, 200);
    Trajectory est = transformed(gt, Pose(Vec3(1, 2, -3), quat_exp(Vec3(0.5, 0.2, -0.4))));
    for (auto& [t, p] : est) p.p += 0.005 * noise.gaussian3();

    const auto r = ape_rmse(est, gt);
    REQUIRE(r);
    const Pose ref = brute_force_umeyama(est, gt);
    CHECK((r->alignment.p - ref.p).norm() < 1e-9);
    CHECK(r->alignment.q.angularDistance(ref.q) < 1e-9);

    // and the RMSE from the reference alignment agrees
    double sq = 0;
    for (size_t i = 0; i < est.size(); ++i) {
        sq += (ref.transform(est[i].second.p) - gt[i].second.p).squaredNorm();
    }
    CHECK(std::abs(r->trans_rmse - std::sqrt(sq / est.size())) < 1e-9);
}

TEST_CASE("disjoint timestamps give empty overlap") {
    Rng rng(5);
    const Trajectory gt = random_traj(rng, 20);
    Trajectory est = gt;
    for (auto& [t, p] : est) t += 100.0;
    CHECK(!ape_rmse(est, gt));
    CHECK(!rpe(est, gt, 0.5));
}

TEST_CASE("RPE is zero on identical trajectories") {
    Rng rng(6);
    const Trajectory gt = random_traj(rng, 60);
    const auto r = rpe(gt, gt, 0.5);
    REQUIRE(r);
    REQUIRE(!r->empty());
    for (const auto& s : *r) {
        CHECK(s.trans < 1e-12);
        CHECK(s.rot < 1e-9);
    }
}

TEST_CASE("constant drift rate shows up as v * delta") {
    Trajectory gt, est;
    const Vec3 v_drift(0.02, -0.01, 0.005);  // m/s
    for (int i = 0; i < 100; ++i) {
        const double t = 0.1 * i;
        const Vec3 p(0.3 * t, 0.1 * t, 0);
        gt.emplace_back(t, Pose(p, Quat::Identity()));
        est.emplace_back(t, Pose(p + v_drift * t, Quat::Identity()));
    }
    for (double delta : {0.5, 1.0, 2.0}) {
        const auto r = rpe(est, gt, delta);
        REQUIRE(r);
        REQUIRE(!r->empty());
        for (const auto& s : *r) CHECK(std::abs(s.trans - v_drift.norm() * delta) < 1e-9);
    }
}

TEST_CASE("non-monotonic timestamps are rejected") {
    Rng rng(7);
    Trajectory gt = random_traj(rng, 10);
    Trajectory bad = gt;
    std::swap(bad[3].first, bad[7].first);
    CHECK_THROWS_AS((void)rpe(bad, gt, 0.5), std::invalid_argument);
    CHECK_THROWS_AS((void)rpe(gt, bad, 0.5), std::invalid_argument);
}

TEST_CASE("map error follows RMSE arithmetic") {
    std::map<int, Vec3> gt, est;
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        gt[i] = rng.vec3(-4, 4);
        est[i] = gt[i];
    }
    CHECK(*map_error(est, gt) < 1e-12);

    est[42] += Vec3(0.03, 0, 0);  // single 3 cm outlier among 100
    CHECK(std::abs(*map_error(est, gt) - 0.003) < 1e-12);

    std::map<int, Vec3> unrelated{{1000, Vec3::Zero()}};
    CHECK(!map_error(unrelated, gt));
}

TEST_CASE("map error is evaluated in the aligned frame") {
    Rng rng(9);
    std::map<int, Vec3> gt, est;
    const Pose T(Vec3(1, -1, 2), quat_exp(Vec3(0.2, 0.4, -0.1)));
    for (int i = 0; i < 50; ++i) {
        gt[i] = rng.vec3(-4, 4);
        est[i] = T.inverse().transform(gt[i]);
    }
    CHECK(*map_error(est, gt, T) < 1e-10);
    CHECK(*map_error(est, gt) > 0.1);
}

TEST_CASE("mesh sampling hits the requested density") {
    const MeshMap m = square_mesh(4.0, 0.0);  // 16 m^2
    const auto samples = sample_mesh(m, 1000.0, 5);
    CHECK(samples.size() > size_t(16000 * 0.98));
    CHECK(samples.size() < size_t(16000 * 1.02));
    for (const Vec3& s : samples) {
        CHECK(s.x() >= -1e-12);
        CHECK(s.x() <= 4.0 + 1e-12);
        CHECK(std::abs(s.z()) < 1e-12);
    }
}

TEST_CASE("mesh on the ground-truth plane has near-zero error") {
    const MeshMap m = square_mesh(4.0, 0.0);
    const auto cloud = plane_cloud(4.0, 0.02);
    const auto err = mesh_error(m, cloud);
    REQUIRE(err);
    CHECK(*err < 0.01);  // below the gt half-spacing
}

TEST_CASE("2 cm offset mesh reports 2 cm mean error") {
    const MeshMap m = square_mesh(4.0, 0.02);
    const auto cloud = plane_cloud(4.0, 0.005);
    const auto err = mesh_error(m, cloud);
    REQUIRE(err);
    CHECK(*err > 0.02 * 0.9);
    CHECK(*err < 0.02 * 1.1);
}

TEST_CASE("empty mesh or cloud is an error") {
    CHECK(!mesh_error(MeshMap{}, plane_cloud(1.0, 0.1)));
    CHECK(!mesh_error(square_mesh(1.0, 0.0), {}));
}

TEST_CASE("grid nearest neighbor matches brute force") {
    Rng rng(10);
    std::vector<Vec3> cloud;
    for (int i = 0; i < 500; ++i) cloud.push_back(rng.vec3(-5, 5));
    const PointGrid grid(cloud);
    for (int k = 0; k < 200; ++k) {
        const Vec3 q = rng.vec3(-8, 8);
        double best = 1e18;
        for (const Vec3& p : cloud) best = std::min(best, (p - q).norm());
        CHECK(std::abs(grid.nearest_distance(q) - best) < 1e-9);
    }
}
