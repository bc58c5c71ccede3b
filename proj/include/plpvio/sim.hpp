#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "plpvio/geometry.hpp"
#include "plpvio/imu.hpp"

namespace plpvio {

// Deterministic across platforms: raw mt19937_64 output mapped to doubles,
// gaussians via Box-Muller (std::normal_distribution is not portable).
struct SimRng {
    std::mt19937_64 gen;
    bool have_spare = false;
    double spare = 0.0;

    explicit SimRng(uint64_t seed) : gen(seed) {}

    double uniform() { return (gen() >> 11) * (1.0 / 9007199254740992.0); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double gaussian();
    Vec3 gaussian3() { return Vec3(gaussian(), gaussian(), gaussian()); }
};

struct CameraModel {
    int width = 640;
    int height = 480;
    double fx = 460.0;
    double fy = 460.0;
    double cx = 320.0;
    double cy = 240.0;

    // p_c in the camera frame (z forward); false if behind or out of frame
    bool project(const Vec3& p_c, Vec2* px) const;
    Vec3 unproject(const Vec2& px) const {
        return Vec3((px.x() - cx) / fx, (px.y() - cy) / fy, 1.0);
    }
};

// camera mounted forward-looking: body x forward / z up, camera z optical axis
Pose camera_extrinsics();

struct SceneOverrides {
    double side = 8.0;
    double wall_height = 3.0;
    int points_per_wall = 22;
    int floor_points = 30;
    int lines_per_wall = 12;
};

struct SceneSpec {
    double side = 8.0;
    double wall_height = 3.0;
    std::vector<Vec3> points;
    std::vector<Vec3> point_normals;  // interior-facing surface normal per point
    std::vector<std::array<Vec3, 2>> lines;
    std::vector<Vec3> line_normals;
    std::vector<PlaneParam> planes;  // ground truth: 4 walls + floor, n interior

    // line endpoint ids in gt_map.csv: kLineIdBase + 2 * line_id + endpoint
    static constexpr int kLineIdBase = 1000000;
};

SceneSpec build_room_scene(uint64_t seed, const SceneOverrides& ov = {});

struct TrajectorySpec {
    double duration = 40.0;
    double cam_rate = 20.0;
    double imu_rate = 200.0;

    // elliptic loop with vertical oscillation and pitch/roll excitation
    double rx = 1.5, ry = 1.2;
    double omega_xy = 2.0 * M_PI / 20.0;
    double z0 = 1.5, az = 0.3;
    double omega_z = 2.0 * M_PI * 0.15;
    double pitch_amp = 0.12, omega_pitch = 2.0 * M_PI * 0.23;
    double roll_amp = 0.10, omega_roll = 2.0 * M_PI * 0.31;

    Vec3 position(double t) const;
    Vec3 velocity(double t) const;
    Vec3 acceleration(double t) const;
    Quat orientation(double t) const;       // q_wb, yaw tracks the tangent
    Vec3 angular_velocity_body(double t) const;

    ImuState state(double t) const;
};

struct SimNoise {
    bool enabled = true;
    double pixel_sigma = 1.0;
    ImuNoise imu;
    Vec3 init_ba = Vec3(0.02, -0.01, 0.015);
    Vec3 init_bg = Vec3(0.002, 0.001, -0.0015);
    bool bias_walk = true;
};

struct ImuStreamSample {
    double t = 0.0;
    Vec3 w = Vec3::Zero();
    Vec3 a = Vec3::Zero();
};

struct FrameObs {
    int frame_id = -1;
    double t = 0.0;
    struct Pt {
        int id;
        Vec2 uv;
    };
    struct Ln {
        int id;
        Vec2 s, e;
    };
    std::vector<Pt> points;
    std::vector<Ln> lines;
};

struct MeasurementLog {
    CameraModel camera;
    double imu_rate = 200.0;
    double cam_rate = 20.0;
    std::vector<ImuStreamSample> imu;
    std::vector<FrameObs> frames;
    std::vector<std::pair<double, Pose>> gt_traj;  // body pose at frame times
    SceneSpec scene;                               // ground-truth map
};

std::vector<ImuStreamSample> gen_imu(const TrajectorySpec& traj, const SimNoise& noise,
                                     uint64_t seed);

MeasurementLog gen_observations(const SceneSpec& scene, const TrajectorySpec& traj,
                                const CameraModel& cam, const SimNoise& noise, uint64_t seed);

// gen_imu + gen_observations with decorrelated sub-seeds
MeasurementLog simulate(const SceneSpec& scene, const TrajectorySpec& traj,
                        const CameraModel& cam, const SimNoise& noise, uint64_t seed);

void write_log(const std::string& dir, const MeasurementLog& log);
MeasurementLog read_log(const std::string& dir);

}  // namespace plpvio
