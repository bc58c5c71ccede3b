#include "plpvio/sim.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace plpvio {

double SimRng::gaussian() {
    if (have_spare) {
        have_spare = false;
        return spare;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare = r * std::sin(2.0 * M_PI * u2);
    have_spare = true;
    return r * std::cos(2.0 * M_PI * u2);
}

bool CameraModel::project(const Vec3& p_c, Vec2* px) const {
    if (p_c.z() < 0.1) return false;
    const double u = fx * p_c.x() / p_c.z() + cx;
    const double v = fy * p_c.y() / p_c.z() + cy;
    if (u < 0 || u >= width || v < 0 || v >= height) return false;
    *px = Vec2(u, v);
    return true;
}

Pose camera_extrinsics() {
    Mat3 R_bc;
    // camera x = -body y, camera y = -body z, camera z = body x
    R_bc << 0, 0, 1,
            -1, 0, 0,
            0, -1, 0;
    return Pose(Vec3::Zero(), Quat(R_bc));
}

SceneSpec build_room_scene(uint64_t seed, const SceneOverrides& ov) {
    SceneSpec scene;
    scene.side = ov.side;
    scene.wall_height = ov.wall_height;
    const double h = ov.side / 2.0;
    SimRng rng(seed);

    struct Wall {
        Vec3 origin, u_dir, v_dir, normal;  // interior-facing normal
        double u_len, v_len;
    };
    const std::vector<Wall> walls = {
        {{h, -h, 0}, {0, 1, 0}, {0, 0, 1}, {-1, 0, 0}, ov.side, ov.wall_height},
        {{-h, -h, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, ov.side, ov.wall_height},
        {{-h, h, 0}, {1, 0, 0}, {0, 0, 1}, {0, -1, 0}, ov.side, ov.wall_height},
        {{-h, -h, 0}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}, ov.side, ov.wall_height},
    };

    for (const auto& w : walls) {
        for (int i = 0; i < ov.points_per_wall; ++i) {
            const double u = rng.uniform(0.05, 0.95) * w.u_len;
            const double v = rng.uniform(0.05, 0.95) * w.v_len;
            scene.points.push_back(w.origin + u * w.u_dir + v * w.v_dir);
            scene.point_normals.push_back(w.normal);
        }
    }
    // floor points
    for (int i = 0; i < ov.floor_points; ++i) {
        scene.points.push_back(
            Vec3(rng.uniform(-0.95 * h, 0.95 * h), rng.uniform(-0.95 * h, 0.95 * h), 0.0));
        scene.point_normals.push_back(Vec3::UnitZ());
    }

    // wall lines: mix of vertical, horizontal, and diagonal segments
    for (const auto& w : walls) {
        for (int i = 0; i < ov.lines_per_wall; ++i) {
            const int kind = i % 3;
            const double u0 = rng.uniform(0.08, 0.6) * w.u_len;
            const double v0 = rng.uniform(0.08, 0.5) * w.v_len;
            Vec3 a = w.origin + u0 * w.u_dir + v0 * w.v_dir;
            Vec3 b;
            if (kind == 0) {  // vertical
                b = a + rng.uniform(0.8, 0.45 * w.v_len) * w.v_dir;
            } else if (kind == 1) {  // horizontal
                b = a + rng.uniform(0.8, 0.3 * w.u_len) * w.u_dir;
            } else {  // diagonal
                b = a + rng.uniform(0.7, 1.6) * w.u_dir + rng.uniform(0.5, 1.2) * w.v_dir;
            }
            scene.lines.push_back({a, b});
            scene.line_normals.push_back(w.normal);
        }
    }

    scene.planes = {
        PlaneParam::from_nd(Vec3(-1, 0, 0), -h), PlaneParam::from_nd(Vec3(1, 0, 0), -h),
        PlaneParam::from_nd(Vec3(0, -1, 0), -h), PlaneParam::from_nd(Vec3(0, 1, 0), -h),
        PlaneParam::from_nd(Vec3(0, 0, 1), 0.0)};
    return scene;
}

Vec3 TrajectorySpec::position(double t) const {
    return Vec3(rx * std::sin(omega_xy * t), ry * std::cos(omega_xy * t),
                z0 + az * std::sin(omega_z * t));
}

Vec3 TrajectorySpec::velocity(double t) const {
    return Vec3(rx * omega_xy * std::cos(omega_xy * t), -ry * omega_xy * std::sin(omega_xy * t),
                az * omega_z * std::cos(omega_z * t));
}

Vec3 TrajectorySpec::acceleration(double t) const {
    return Vec3(-rx * omega_xy * omega_xy * std::sin(omega_xy * t),
                -ry * omega_xy * omega_xy * std::cos(omega_xy * t),
                -az * omega_z * omega_z * std::sin(omega_z * t));
}

Quat TrajectorySpec::orientation(double t) const {
    const Vec3 v = velocity(t);
    const double yaw = std::atan2(v.y(), v.x());
    const double pitch = pitch_amp * std::sin(omega_pitch * t);
    const double roll = roll_amp * std::sin(omega_roll * t);
    return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                Eigen::AngleAxisd(roll, Vec3::UnitX()));
}

Vec3 TrajectorySpec::angular_velocity_body(double t) const {
    const Vec3 v = velocity(t);
    const Vec3 a = acceleration(t);
    const double hv2 = v.x() * v.x() + v.y() * v.y();
    const double yaw_dot = hv2 > 1e-18 ? (v.x() * a.y() - v.y() * a.x()) / hv2 : 0.0;
    const double pitch = pitch_amp * std::sin(omega_pitch * t);
    const double pitch_dot = pitch_amp * omega_pitch * std::cos(omega_pitch * t);
    const double roll = roll_amp * std::sin(omega_roll * t);
    const double roll_dot = roll_amp * omega_roll * std::cos(omega_roll * t);

    // body rates for z-y-x Euler composition
    return Vec3(roll_dot - yaw_dot * std::sin(pitch),
                pitch_dot * std::cos(roll) + yaw_dot * std::cos(pitch) * std::sin(roll),
                -pitch_dot * std::sin(roll) + yaw_dot * std::cos(pitch) * std::cos(roll));
}

ImuState TrajectorySpec::state(double t) const {
    ImuState x;
    x.pose = Pose(position(t), orientation(t));
    x.v = velocity(t);
    return x;
}

std::vector<ImuStreamSample> gen_imu(const TrajectorySpec& traj, const SimNoise& noise,
                                     uint64_t seed) {
    SimRng rng(seed);
    const double dt = 1.0 / traj.imu_rate;
    const double sqrt_dt = std::sqrt(dt);
    const int n = static_cast<int>(std::llround(traj.duration * traj.imu_rate));
    Vec3 ba = noise.enabled ? noise.init_ba : Vec3::Zero();
    Vec3 bg = noise.enabled ? noise.init_bg : Vec3::Zero();

    std::vector<ImuStreamSample> out;
    out.reserve(n + 1);
    for (int k = 0; k <= n; ++k) {
        const double t = k * dt;
        const Mat3 R_bw = traj.orientation(t).toRotationMatrix().transpose();
        ImuStreamSample s;
        s.t = t;
        s.w = traj.angular_velocity_body(t);
        s.a = R_bw * (traj.acceleration(t) - gravity_world());
        if (noise.enabled) {
            s.w += bg + (noise.imu.gyr_n / sqrt_dt) * rng.gaussian3();
            s.a += ba + (noise.imu.acc_n / sqrt_dt) * rng.gaussian3();
            if (noise.bias_walk) {
                bg += noise.imu.gyr_w * sqrt_dt * rng.gaussian3();
                ba += noise.imu.acc_w * sqrt_dt * rng.gaussian3();
            }
        }
        out.push_back(s);
    }
    return out;
}

MeasurementLog gen_observations(const SceneSpec& scene, const TrajectorySpec& traj,
                                const CameraModel& cam, const SimNoise& noise, uint64_t seed) {
    SimRng rng(seed);
    MeasurementLog log;
    log.camera = cam;
    log.imu_rate = traj.imu_rate;
    log.cam_rate = traj.cam_rate;
    log.scene = scene;

    const Pose T_bc = camera_extrinsics();
    const int n_frames = static_cast<int>(std::llround(traj.duration * traj.cam_rate));
    const double sigma = noise.enabled ? noise.pixel_sigma : 0.0;

    for (int i = 0; i <= n_frames; ++i) {
        const double t = i / traj.cam_rate;
        const Pose T_wb(traj.position(t), traj.orientation(t));
        const Pose T_wc = T_wb * T_bc;
        const Pose T_cw = T_wc.inverse();

        FrameObs frame;
        frame.frame_id = i;
        frame.t = t;

        for (int pid = 0; pid < static_cast<int>(scene.points.size()); ++pid) {
            const Vec3& p_w = scene.points[pid];
            if (scene.point_normals[pid].dot(T_wc.p - p_w) <= 0) continue;  // back-facing
            Vec2 px;
            if (!cam.project(T_cw.transform(p_w), &px)) continue;
            frame.points.push_back({pid, px + sigma * Vec2(rng.gaussian(), rng.gaussian())});
        }
        for (int lid = 0; lid < static_cast<int>(scene.lines.size()); ++lid) {
            const auto& seg = scene.lines[lid];
            if (scene.line_normals[lid].dot(T_wc.p - seg[0]) <= 0) continue;
            Vec2 ps, pe;
            if (!cam.project(T_cw.transform(seg[0]), &ps)) continue;
            if (!cam.project(T_cw.transform(seg[1]), &pe)) continue;
            frame.lines.push_back({lid, ps + sigma * Vec2(rng.gaussian(), rng.gaussian()),
                                   pe + sigma * Vec2(rng.gaussian(), rng.gaussian())});
        }
        log.frames.push_back(std::move(frame));
        log.gt_traj.emplace_back(t, T_wb);
    }
    return log;
}

MeasurementLog simulate(const SceneSpec& scene, const TrajectorySpec& traj,
                        const CameraModel& cam, const SimNoise& noise, uint64_t seed) {
    MeasurementLog log = gen_observations(scene, traj, cam, noise, seed * 2654435761u + 1);
    log.imu = gen_imu(traj, noise, seed * 2654435761u + 2);
    return log;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_log(const std::string& dir, const MeasurementLog& log) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream os(dir + "/imu.csv");
        os << "t,wx,wy,wz,ax,ay,az\n";
        for (const auto& s : log.imu) {
            os << fmt(s.t) << "," << fmt(s.w.x()) << "," << fmt(s.w.y()) << "," << fmt(s.w.z())
               << "," << fmt(s.a.x()) << "," << fmt(s.a.y()) << "," << fmt(s.a.z()) << "\n";
        }
    }
    {
        std::ofstream os(dir + "/frames.csv");
        os << "t,frame_id\n";
        for (const auto& f : log.frames) os << fmt(f.t) << "," << f.frame_id << "\n";
    }
    {
        std::ofstream os(dir + "/points.csv");
        os << "frame_id,landmark_id,u,v\n";
        for (const auto& f : log.frames) {
            for (const auto& p : f.points) {
                os << f.frame_id << "," << p.id << "," << fmt(p.uv.x()) << "," << fmt(p.uv.y())
                   << "\n";
            }
        }
    }
    {
        std::ofstream os(dir + "/lines.csv");
        os << "frame_id,line_id,us,vs,ue,ve\n";
        for (const auto& f : log.frames) {
            for (const auto& l : f.lines) {
                os << f.frame_id << "," << l.id << "," << fmt(l.s.x()) << "," << fmt(l.s.y())
                   << "," << fmt(l.e.x()) << "," << fmt(l.e.y()) << "\n";
            }
        }
    }
    {
        std::ofstream os(dir + "/gt_traj.txt");
        os << "# timestamp tx ty tz qx qy qz qw\n";
        for (const auto& [t, pose] : log.gt_traj) {
            os << fmt(t) << " " << fmt(pose.p.x()) << " " << fmt(pose.p.y()) << " "
               << fmt(pose.p.z()) << " " << fmt(pose.q.x()) << " " << fmt(pose.q.y()) << " "
               << fmt(pose.q.z()) << " " << fmt(pose.q.w()) << "\n";
        }
    }
    {
        std::ofstream os(dir + "/gt_map.csv");
        os << "landmark_id,x,y,z\n";
        for (int pid = 0; pid < static_cast<int>(log.scene.points.size()); ++pid) {
            const Vec3& p = log.scene.points[pid];
            os << pid << "," << fmt(p.x()) << "," << fmt(p.y()) << "," << fmt(p.z()) << "\n";
        }
        for (int lid = 0; lid < static_cast<int>(log.scene.lines.size()); ++lid) {
            for (int e = 0; e < 2; ++e) {
                const Vec3& p = log.scene.lines[lid][e];
                os << SceneSpec::kLineIdBase + 2 * lid + e << "," << fmt(p.x()) << ","
                   << fmt(p.y()) << "," << fmt(p.z()) << "\n";
            }
        }
    }
    {
        // room geometry so `evaluate` can rebuild the ground-truth surfaces
        std::ofstream os(dir + "/scene.csv");
        os << "key,value\n";
        os << "side," << fmt(log.scene.side) << "\n";
        os << "wall_height," << fmt(log.scene.wall_height) << "\n";
        os << "imu_rate," << fmt(log.imu_rate) << "\n";
        os << "cam_rate," << fmt(log.cam_rate) << "\n";
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return is;
}

}  // namespace

MeasurementLog read_log(const std::string& dir) {
    MeasurementLog log;
    std::string line;

    {
        auto is = open_or_throw(dir + "/imu.csv");
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            const auto f = split_csv(line);
            if (f.size() != 7) continue;
            ImuStreamSample s;
            s.t = std::stod(f[0]);
            s.w = Vec3(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
            s.a = Vec3(std::stod(f[4]), std::stod(f[5]), std::stod(f[6]));
            log.imu.push_back(s);
        }
    }
    {
        auto is = open_or_throw(dir + "/frames.csv");
        std::getline(is, line);
        while (std::getline(is, line)) {
            const auto f = split_csv(line);
            if (f.size() != 2) continue;
            FrameObs frame;
            frame.t = std::stod(f[0]);
            frame.frame_id = std::stoi(f[1]);
            log.frames.push_back(frame);
        }
    }
    std::map<int, int> frame_index;
    for (int i = 0; i < static_cast<int>(log.frames.size()); ++i) {
        frame_index[log.frames[i].frame_id] = i;
    }
    {
        auto is = open_or_throw(dir + "/points.csv");
        std::getline(is, line);
        while (std::getline(is, line)) {
            const auto f = split_csv(line);
            if (f.size() != 4) continue;
            const auto it = frame_index.find(std::stoi(f[0]));
            if (it == frame_index.end()) continue;
            log.frames[it->second].points.push_back(
                {std::stoi(f[1]), Vec2(std::stod(f[2]), std::stod(f[3]))});
        }
    }
    {
        auto is = open_or_throw(dir + "/lines.csv");
        std::getline(is, line);
        while (std::getline(is, line)) {
            const auto f = split_csv(line);
            if (f.size() != 6) continue;
            const auto it = frame_index.find(std::stoi(f[0]));
            if (it == frame_index.end()) continue;
            log.frames[it->second].lines.push_back({std::stoi(f[1]),
                                                    Vec2(std::stod(f[2]), std::stod(f[3])),
                                                    Vec2(std::stod(f[4]), std::stod(f[5]))});
        }
    }
    {
        auto is = open_or_throw(dir + "/gt_traj.txt");
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::stringstream ss(line);
            double t, tx, ty, tz, qx, qy, qz, qw;
            if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) continue;
            log.gt_traj.emplace_back(t, Pose(Vec3(tx, ty, tz), Quat(qw, qx, qy, qz)));
        }
    }
    {
        auto is = open_or_throw(dir + "/gt_map.csv");
        std::getline(is, line);
        std::map<int, Vec3> points;
        std::map<int, Vec3> endpoints;
        while (std::getline(is, line)) {
            const auto f = split_csv(line);
            if (f.size() != 4) continue;
            const int id = std::stoi(f[0]);
            const Vec3 p(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
            if (id >= SceneSpec::kLineIdBase) {
                endpoints[id - SceneSpec::kLineIdBase] = p;
            } else {
                points[id] = p;
            }
        }
        if (!points.empty()) {
            log.scene.points.resize(points.rbegin()->first + 1, Vec3::Zero());
            for (const auto& [id, p] : points) log.scene.points[id] = p;
        }
        if (!endpoints.empty()) {
            log.scene.lines.resize(endpoints.rbegin()->first / 2 + 1);
            for (const auto& [k, p] : endpoints) log.scene.lines[k / 2][k % 2] = p;
        }
    }
    {
        std::ifstream is(dir + "/scene.csv");
        if (is) {
            std::getline(is, line);
            while (std::getline(is, line)) {
                const auto f = split_csv(line);
                if (f.size() != 2) continue;
                if (f[0] == "side") log.scene.side = std::stod(f[1]);
                if (f[0] == "wall_height") log.scene.wall_height = std::stod(f[1]);
                if (f[0] == "imu_rate") log.imu_rate = std::stod(f[1]);
                if (f[0] == "cam_rate") log.cam_rate = std::stod(f[1]);
            }
            const double h = log.scene.side / 2.0;
            log.scene.planes = {PlaneParam::from_nd(Vec3(-1, 0, 0), -h),
                                PlaneParam::from_nd(Vec3(1, 0, 0), -h),
                                PlaneParam::from_nd(Vec3(0, -1, 0), -h),
                                PlaneParam::from_nd(Vec3(0, 1, 0), -h),
                                PlaneParam::from_nd(Vec3(0, 0, 1), 0.0)};
        }
    }
    return log;
}

}  // namespace plpvio
