#include "plpvio/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace plpvio {

Pipeline pipeline_from_string(const std::string& s) {
    if (s == "P") return Pipeline::P;
    if (s == "PP") return Pipeline::PP;
    if (s == "PL") return Pipeline::PL;
    if (s == "PLP") return Pipeline::PLP;
    throw ConfigError("unknown pipeline '" + s + "' (expected P, PP, PL, or PLP)");
}

std::string to_string(Pipeline p) {
    switch (p) {
        case Pipeline::P: return "P";
        case Pipeline::PP: return "PP";
        case Pipeline::PL: return "PL";
        case Pipeline::PLP: return "PLP";
    }
    return "?";
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Entry {
    std::function<void(Config&, const std::string&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

std::map<std::string, Entry> key_table() {
    std::map<std::string, Entry> t;
    auto dbl = [&](const std::string& k, auto field) {
        t[k] = {[field](Config& c, const std::string& key, const std::string& v) {
                    c.*field = parse_double(key, v);
                },
                [field](const Config& c) { return fmt(c.*field); }};
    };
    auto sub_dbl = [&](const std::string& k, auto sub, auto field) {
        t[k] = {[sub, field](Config& c, const std::string& key, const std::string& v) {
                    (c.*sub).*field = parse_double(key, v);
                },
                [sub, field](const Config& c) { return fmt((c.*sub).*field); }};
    };
    auto sub_deg = [&](const std::string& k, auto sub, auto field) {
        t[k] = {[sub, field](Config& c, const std::string& key, const std::string& v) {
                    (c.*sub).*field = deg2rad(parse_double(key, v));
                },
                [sub, field](const Config& c) { return fmt(rad2deg((c.*sub).*field)); }};
    };
    auto sub_int = [&](const std::string& k, auto sub, auto field) {
        t[k] = {[sub, field](Config& c, const std::string& key, const std::string& v) {
                    (c.*sub).*field = static_cast<int>(parse_int(key, v));
                },
                [sub, field](const Config& c) { return std::to_string((c.*sub).*field); }};
    };

    t["pipeline"] = {[](Config& c, const std::string&, const std::string& v) {
                         c.pipeline = pipeline_from_string(v);
                     },
                     [](const Config& c) { return to_string(c.pipeline); }};
    t["seed"] = {[](Config& c, const std::string& key, const std::string& v) {
                     c.seed = static_cast<uint64_t>(parse_int(key, v));
                 },
                 [](const Config& c) { return std::to_string(c.seed); }};
    t["log_dir"] = {[](Config& c, const std::string&, const std::string& v) { c.log_dir = v; },
                    [](const Config& c) { return c.log_dir; }};
    t["out_dir"] = {[](Config& c, const std::string&, const std::string& v) { c.out_dir = v; },
                    [](const Config& c) { return c.out_dir; }};
    t["dump_histograms"] = {[](Config& c, const std::string& key, const std::string& v) {
                                c.dump_histograms = parse_bool(key, v);
                            },
                            [](const Config& c) { return c.dump_histograms ? "true" : "false"; }};
    t["dump_diagnostics"] = {[](Config& c, const std::string& key, const std::string& v) {
                                 c.dump_diagnostics = parse_bool(key, v);
                             },
                             [](const Config& c) { return c.dump_diagnostics ? "true" : "false"; }};

    // sliding window
    sub_int("max_keyframes", &Config::window, &WindowConfig::max_keyframes);
    sub_int("max_iterations", &Config::window, &WindowConfig::max_iterations);
    sub_dbl("rel_cost_tol", &Config::window, &WindowConfig::rel_cost_tol);
    sub_dbl("step_tol", &Config::window, &WindowConfig::step_tol);
    sub_dbl("lambda_init", &Config::window, &WindowConfig::lambda_init);
    sub_dbl("lambda_up", &Config::window, &WindowConfig::lambda_up);
    sub_dbl("lambda_down", &Config::window, &WindowConfig::lambda_down);
    sub_int("max_rejects", &Config::window, &WindowConfig::max_rejects);
    sub_dbl("cauchy_c", &Config::window, &WindowConfig::cauchy_c);
    sub_deg("min_parallax_deg", &Config::window, &WindowConfig::min_parallax);
    sub_deg("min_line_dihedral_deg", &Config::window, &WindowConfig::min_line_dihedral);
    sub_int("plane_cull_threshold", &Config::window, &WindowConfig::plane_cull_threshold);
    sub_dbl("deassoc_dist", &Config::window, &WindowConfig::deassoc_dist);
    dbl("keyframe_parallax_px", &Config::keyframe_parallax_px);
    t["keyframe_min_tracked"] = {
        [](Config& c, const std::string& key, const std::string& v) {
            c.keyframe_min_tracked = static_cast<int>(parse_int(key, v));
        },
        [](const Config& c) { return std::to_string(c.keyframe_min_tracked); }};

    // factor noise
    t["pixel_sigma"] = {[](Config& c, const std::string& key, const std::string& v) {
                            c.window.noise.pixel_sigma = parse_double(key, v);
                            c.noise.pixel_sigma = c.window.noise.pixel_sigma;
                        },
                        [](const Config& c) { return fmt(c.window.noise.pixel_sigma); }};
    t["focal"] = {[](Config& c, const std::string& key, const std::string& v) {
                      c.window.noise.focal = parse_double(key, v);
                  },
                  [](const Config& c) { return fmt(c.window.noise.focal); }};
    t["plane_dist_sigma"] = {[](Config& c, const std::string& key, const std::string& v) {
                                 c.window.noise.plane_dist_sigma = parse_double(key, v);
                             },
                             [](const Config& c) { return fmt(c.window.noise.plane_dist_sigma); }};
    t["plane_angle_sigma_deg"] = {
        [](Config& c, const std::string& key, const std::string& v) {
            c.window.noise.plane_angle_sigma = deg2rad(parse_double(key, v));
        },
        [](const Config& c) { return fmt(rad2deg(c.window.noise.plane_angle_sigma)); }};

    // plane detection
    sub_dbl("height_bin", &Config::detect, &DetectConfig::height_bin);
    sub_deg("theta_bin_deg", &Config::detect, &DetectConfig::theta_bin);
    sub_dbl("dist_bin", &Config::detect, &DetectConfig::dist_bin);
    sub_dbl("smooth_sigma", &Config::detect, &DetectConfig::smooth_sigma);
    sub_dbl("score_threshold", &Config::detect, &DetectConfig::score_threshold);
    sub_deg("orientation_gate_deg", &Config::detect, &DetectConfig::orientation_gate);
    sub_dbl("max_height", &Config::detect, &DetectConfig::max_height);
    sub_dbl("max_dist", &Config::detect, &DetectConfig::max_dist);
    sub_dbl("line_weight", &Config::detect, &DetectConfig::line_weight);
    sub_deg("merge_angle_deg", &Config::detect, &DetectConfig::merge_angle);
    sub_dbl("merge_dist", &Config::detect, &DetectConfig::merge_dist);
    sub_deg("dedup_angle_deg", &Config::detect, &DetectConfig::dedup_angle);
    sub_dbl("dedup_dist", &Config::detect, &DetectConfig::dedup_dist);
    sub_dbl("assoc_dist", &Config::detect, &DetectConfig::assoc_dist);
    sub_deg("assoc_angle_deg", &Config::detect, &DetectConfig::assoc_angle);

    // mesh filtering
    sub_deg("mesh_normal_angle_deg", &Config::mesh_filter, &MeshFilterConfig::normal_angle);
    sub_int("min_coplanar_neighbors", &Config::mesh_filter,
            &MeshFilterConfig::min_coplanar_neighbors);
    sub_dbl("max_aspect_ratio", &Config::mesh_filter, &MeshFilterConfig::max_aspect_ratio);
    sub_deg("min_corner_angle_deg", &Config::mesh_filter, &MeshFilterConfig::min_corner_angle);

    // simulation
    sub_dbl("room_side", &Config::scene, &SceneOverrides::side);
    sub_dbl("wall_height", &Config::scene, &SceneOverrides::wall_height);
    sub_int("points_per_wall", &Config::scene, &SceneOverrides::points_per_wall);
    sub_int("floor_points", &Config::scene, &SceneOverrides::floor_points);
    sub_int("lines_per_wall", &Config::scene, &SceneOverrides::lines_per_wall);
    sub_dbl("duration", &Config::traj, &TrajectorySpec::duration);
    sub_dbl("cam_rate", &Config::traj, &TrajectorySpec::cam_rate);
    sub_dbl("imu_rate", &Config::traj, &TrajectorySpec::imu_rate);
    t["sim_noise"] = {[](Config& c, const std::string& key, const std::string& v) {
                          c.noise.enabled = parse_bool(key, v);
                      },
                      [](const Config& c) { return c.noise.enabled ? "true" : "false"; }};
    t["sim_pixel_sigma"] = {[](Config& c, const std::string& key, const std::string& v) {
                                c.noise.pixel_sigma = parse_double(key, v);
                            },
                            [](const Config& c) { return fmt(c.noise.pixel_sigma); }};
    t["sim_bias_walk"] = {[](Config& c, const std::string& key, const std::string& v) {
                              c.noise.bias_walk = parse_bool(key, v);
                          },
                          [](const Config& c) { return c.noise.bias_walk ? "true" : "false"; }};
    t["sim_init_bias"] = {[](Config& c, const std::string& key, const std::string& v) {
                              if (!parse_bool(key, v)) {
                                  c.noise.init_ba.setZero();
                                  c.noise.init_bg.setZero();
                              }
                          },
                          [](const Config& c) {
                              return c.noise.init_ba.isZero() && c.noise.init_bg.isZero()
                                         ? "false"
                                         : "true";
                          }};
    t["acc_n"] = {[](Config& c, const std::string& key, const std::string& v) {
                      c.noise.imu.acc_n = parse_double(key, v);
                  },
                  [](const Config& c) { return fmt(c.noise.imu.acc_n); }};
    t["gyr_n"] = {[](Config& c, const std::string& key, const std::string& v) {
                      c.noise.imu.gyr_n = parse_double(key, v);
                  },
                  [](const Config& c) { return fmt(c.noise.imu.gyr_n); }};
    t["acc_w"] = {[](Config& c, const std::string& key, const std::string& v) {
                      c.noise.imu.acc_w = parse_double(key, v);
                  },
                  [](const Config& c) { return fmt(c.noise.imu.acc_w); }};
    t["gyr_w"] = {[](Config& c, const std::string& key, const std::string& v) {
                      c.noise.imu.gyr_w = parse_double(key, v);
                  },
                  [](const Config& c) { return fmt(c.noise.imu.gyr_w); }};

    // evaluation
    dbl("rpe_delta", &Config::rpe_delta);
    dbl("mesh_sample_density", &Config::mesh_sample_density);
    dbl("gt_surface_spacing", &Config::gt_surface_spacing);
    return t;
}

}  // namespace

Config parse_config_text(const std::string& text) {
    Config cfg;
    const auto table = key_table();
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = table.find(key);
        if (it == table.end()) {
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        it->second.set(cfg, key, value);
    }
    cfg.apply_pipeline();
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config_text(os.str());
}

std::string default_config_text() {
    const Config cfg;
    std::ostringstream os;
    for (const auto& [key, entry] : key_table()) {
        os << key << " = " << entry.get(cfg) << "\n";
    }
    return os.str();
}

}  // namespace plpvio
