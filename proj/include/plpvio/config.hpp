#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "plpvio/detect.hpp"
#include "plpvio/mesh.hpp"
#include "plpvio/sim.hpp"
#include "plpvio/window.hpp"

namespace plpvio {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Pipeline { P, PP, PL, PLP };

Pipeline pipeline_from_string(const std::string& s);  // throws ConfigError
std::string to_string(Pipeline p);

struct Config {
    Pipeline pipeline = Pipeline::PLP;
    uint64_t seed = 0;
    std::string log_dir;
    std::string out_dir = "out";
    bool dump_histograms = false;
    bool dump_diagnostics = false;

    WindowConfig window;
    DetectConfig detect;
    // looser than the MeshFilterConfig defaults: the sparse synthetic feature
    // set gives each patch only 2-3 shared-edge neighbors, and cm-level
    // landmark noise tilts same-plane normals by several degrees
    MeshFilterConfig mesh_filter{deg2rad(10.0), 2, 20.0, deg2rad(5.0)};

    double keyframe_parallax_px = 10.0;
    int keyframe_min_tracked = 8;

    SceneOverrides scene;
    TrajectorySpec traj;
    SimNoise noise;

    double rpe_delta = 1.0;           // s
    double mesh_sample_density = 1000.0;  // points / m^2
    double gt_surface_spacing = 0.02;     // m, ground-truth cloud grid

    // line/plane switches derived from the pipeline choice
    void apply_pipeline() {
        window.use_lines = pipeline == Pipeline::PL || pipeline == Pipeline::PLP;
        window.use_planes = pipeline == Pipeline::PP || pipeline == Pipeline::PLP;
    }
};

// Flat "key = value" text, '#' comments; unknown keys or bad values throw
// ConfigError. Keys are listed in default_config_text().
Config parse_config_text(const std::string& text);
Config load_config(const std::string& path);

// every supported key with its default value, suitable as a starting config
std::string default_config_text();

}  // namespace plpvio
