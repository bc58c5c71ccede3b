#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "plpvio/factors.hpp"
#include "plpvio/sim.hpp"
#include "test_util.hpp"

using namespace plpvio;

TEST_CASE("scene landmarks lie exactly on their surfaces") {
    const SceneSpec scene = build_room_scene(3);
    REQUIRE(scene.planes.size() == 5);
    auto on_some_plane = [&](const Vec3& p) {
        for (const auto& pl : scene.planes) {
            if (std::abs(pl.point_distance(p)) < 1e-12) return true;
        }
        return false;
    };
    for (const auto& p : scene.points) CHECK(on_some_plane(p));
    for (const auto& l : scene.lines) {
        CHECK(on_some_plane(l[0]));
        CHECK(on_some_plane(l[1]));
    }
}

TEST_CASE("scene generation is deterministic per seed") {
    const SceneSpec a = build_room_scene(17);
    const SceneSpec b = build_room_scene(17);
    const SceneSpec c = build_room_scene(18);
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i] == b.points[i]);
    bool any_diff = false;
    for (size_t i = 0; i < std::min(a.points.size(), c.points.size()); ++i) {
        if (a.points[i] != c.points[i]) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("side override moves the wall planes") {
    SceneOverrides ov;
    ov.side = 8.0;
    const SceneSpec scene = build_room_scene(1, ov);
    for (const auto& p : scene.points) {
        CHECK(std::abs(p.x()) <= 4.0 + 1e-12);
        CHECK(std::abs(p.y()) <= 4.0 + 1e-12);
    }
    int on_x4 = 0;
    for (const auto& p : scene.points) {
        if (std::abs(std::abs(p.x()) - 4.0) < 1e-12) ++on_x4;
    }
    CHECK(on_x4 > 0);
}

TEST_CASE("trajectory derivatives match numerical differentiation") {
    const TrajectorySpec traj;
    const double eps = 1e-6;
    for (double t = 0.3; t < traj.duration; t += 3.7) {
        const Vec3 v_num = (traj.position(t + eps) - traj.position(t - eps)) / (2 * eps);
        CHECK((traj.velocity(t) - v_num).norm() < 1e-6);
        const Vec3 a_num = (traj.velocity(t + eps) - traj.velocity(t - eps)) / (2 * eps);
        CHECK((traj.acceleration(t) - a_num).norm() < 1e-6);

        // q(t+e) ~ q(t) * Exp(w * e) for body angular velocity
        const Quat dq = traj.orientation(t - eps).conjugate() * traj.orientation(t + eps);
        const Vec3 w_num = log_so3(dq.toRotationMatrix()) / (2 * eps);
        CHECK((traj.angular_velocity_body(t) - w_num).norm() < 1e-6);
    }
    for (double t = 0; t <= traj.duration; t += 0.05) {
        CHECK(traj.velocity(t).norm() < 3.0);
    }
}

TEST_CASE("noise-free IMU stream integrates back to the trajectory") {
    TrajectorySpec traj;
    traj.duration = 10.0;
    SimNoise noise;
    noise.enabled = false;
    const auto stream = gen_imu(traj, noise, 0);

    ImuState x = traj.state(0.0);
    const Vec3 g = gravity_world();
    for (size_t k = 0; k + 1 < stream.size(); ++k) {
        const double dt = stream[k + 1].t - stream[k].t;
        // midpoint integration, matching the estimator's propagation model
        const Quat q0 = x.pose.q;
        const Vec3 w_mid = 0.5 * (stream[k].w + stream[k + 1].w);
        const Quat q1 = (q0 * quat_exp(w_mid * dt)).normalized();
        const Vec3 a0 = q0 * stream[k].a + g;
        const Vec3 a1 = q1 * stream[k + 1].a + g;
        const Vec3 a_mid = 0.5 * (a0 + a1);
        x.pose.p += x.v * dt + 0.5 * a_mid * dt * dt;
        x.v += a_mid * dt;
        x.pose.q = q1;
    }
    const ImuState gt = traj.state(traj.duration);
    CHECK((x.pose.p - gt.pose.p).norm() < 1e-4);
    CHECK((x.v - gt.v).norm() < 1e-4);
    CHECK(x.pose.q.angularDistance(gt.pose.q) < 1e-5);
}

TEST_CASE("static pose measures minus gravity and zero rates") {
    TrajectorySpec traj;
    traj.rx = traj.ry = traj.az = 0.0;
    traj.pitch_amp = traj.roll_amp = 0.0;
    traj.ry = 1e-12;  // keep the yaw well-defined
    SimNoise noise;
    noise.enabled = false;
    traj.duration = 0.5;
    const auto stream = gen_imu(traj, noise, 0);
    for (const auto& s : stream) {
        CHECK(s.w.norm() < 1e-9);
        CHECK((s.a - Vec3(0, 0, kGravityMagnitude)).norm() < 1e-9);
    }
}

TEST_CASE("observation counts sit in the paper regime") {
    const SceneSpec scene = build_room_scene(7);
    const TrajectorySpec traj;
    const CameraModel cam;
    SimNoise noise;
    const MeasurementLog log = gen_observations(scene, traj, cam, noise, 7);

    double mean_pts = 0, mean_lines = 0;
    for (const auto& f : log.frames) {
        mean_pts += f.points.size();
        mean_lines += f.lines.size();
    }
    mean_pts /= log.frames.size();
    mean_lines /= log.frames.size();
    MESSAGE("mean points/frame: " << mean_pts << ", mean lines/frame: " << mean_lines);
    CHECK(mean_pts > 15.0 * 0.7);
    CHECK(mean_pts < 15.0 * 1.3);
    CHECK(mean_lines > 8.0 * 0.7);
    CHECK(mean_lines < 8.0 * 1.3);
}

TEST_CASE("behind-camera and back-facing landmarks are never observed") {
    const SceneSpec scene = build_room_scene(7);
    const TrajectorySpec traj;
    const CameraModel cam;
    SimNoise noise;
    noise.enabled = false;
    const MeasurementLog log = gen_observations(scene, traj, cam, noise, 7);
    const Pose T_bc = camera_extrinsics();

    for (size_t i = 0; i < log.frames.size(); i += 17) {
        const auto& f = log.frames[i];
        const Pose T_wc = log.gt_traj[i].second * T_bc;
        const Pose T_cw = T_wc.inverse();
        for (const auto& obs : f.points) {
            const Vec3 p_c = T_cw.transform(scene.points[obs.id]);
            CHECK(p_c.z() > 0);
        }
    }
}

TEST_CASE("zero-noise observations reproject exactly") {
    const SceneSpec scene = build_room_scene(9);
    const TrajectorySpec traj;
    const CameraModel cam;
    SimNoise noise;
    noise.enabled = false;
    const MeasurementLog log = gen_observations(scene, traj, cam, noise, 9);
    const Pose T_bc = camera_extrinsics();

    for (size_t i = 0; i < log.frames.size(); i += 23) {
        const auto& f = log.frames[i];
        const Pose T_cw = (log.gt_traj[i].second * T_bc).inverse();
        for (const auto& obs : f.points) {
            const Vec3 p_c = T_cw.transform(scene.points[obs.id]);
            const Vec3 n = cam.unproject(obs.uv);
            CHECK(std::abs(p_c.x() / p_c.z() - n.x()) < 1e-10);
            CHECK(std::abs(p_c.y() / p_c.z() - n.y()) < 1e-10);
        }
        for (const auto& obs : f.lines) {
            // endpoints land on the projected infinite line
            const Vec3 a = T_cw.transform(scene.lines[obs.id][0]);
            const Vec3 b = T_cw.transform(scene.lines[obs.id][1]);
            const Vec3 n_proj = a.cross(b);
            CHECK(std::abs(point_line_distance(cam.unproject(obs.s), n_proj)) < 1e-9);
            CHECK(std::abs(point_line_distance(cam.unproject(obs.e), n_proj)) < 1e-9);
        }
    }
}

TEST_CASE("log writer and reader round-trip") {
    const SceneSpec scene = build_room_scene(4);
    TrajectorySpec traj;
    traj.duration = 2.0;
    const CameraModel cam;
    SimNoise noise;
    const MeasurementLog log = simulate(scene, traj, cam, noise, 4);

    const std::string dir = std::filesystem::temp_directory_path() / "plpvio_sim_rt";
    write_log(dir, log);
    const MeasurementLog back = read_log(dir);

    REQUIRE(back.imu.size() == log.imu.size());
    REQUIRE(back.frames.size() == log.frames.size());
    for (size_t k = 0; k < log.imu.size(); k += 37) {
        CHECK((back.imu[k].w - log.imu[k].w).norm() < 1e-12);
        CHECK((back.imu[k].a - log.imu[k].a).norm() < 1e-12);
    }
    for (size_t i = 0; i < log.frames.size(); ++i) {
        REQUIRE(back.frames[i].points.size() == log.frames[i].points.size());
        REQUIRE(back.frames[i].lines.size() == log.frames[i].lines.size());
        for (size_t j = 0; j < log.frames[i].points.size(); ++j) {
            CHECK((back.frames[i].points[j].uv - log.frames[i].points[j].uv).norm() < 1e-12);
        }
    }
    REQUIRE(back.gt_traj.size() == log.gt_traj.size());
    CHECK((back.gt_traj[5].second.p - log.gt_traj[5].second.p).norm() < 1e-12);
    REQUIRE(back.scene.points.size() == scene.points.size());
    CHECK((back.scene.points[3] - scene.points[3]).norm() < 1e-12);
    REQUIRE(back.scene.lines.size() == scene.lines.size());
    CHECK((back.scene.lines[2][1] - scene.lines[2][1]).norm() < 1e-12);
    CHECK(back.scene.side == scene.side);
    std::filesystem::remove_all(dir);
}

TEST_CASE("full simulation is deterministic per seed") {
    const SceneSpec scene = build_room_scene(2);
    TrajectorySpec traj;
    traj.duration = 3.0;
    const MeasurementLog a = simulate(scene, traj, {}, {}, 2);
    const MeasurementLog b = simulate(scene, traj, {}, {}, 2);
    REQUIRE(a.imu.size() == b.imu.size());
    for (size_t k = 0; k < a.imu.size(); ++k) {
        CHECK(a.imu[k].w == b.imu[k].w);
        CHECK(a.imu[k].a == b.imu[k].a);
    }
    for (size_t i = 0; i < a.frames.size(); ++i) {
        REQUIRE(a.frames[i].points.size() == b.frames[i].points.size());
        for (size_t j = 0; j < a.frames[i].points.size(); ++j) {
            CHECK(a.frames[i].points[j].uv == b.frames[i].points[j].uv);
        }
    }
}
