#pragma once

#include <map>
#include <optional>
#include <string>

#include "plpvio/config.hpp"
#include "plpvio/eval.hpp"

namespace plpvio {

struct StageTiming {
    double total_ms = 0.0;
    int windows = 0;

    double per_window_ms() const { return windows > 0 ? total_ms / windows : 0.0; }
};

struct MetricsReport {
    std::string pipeline;
    uint64_t seed = 0;
    bool diverged = false;
    int n_frames = 0;
    size_t n_planes = 0;
    size_t n_mesh_patches = 0;
    double ape_trans = 0.0;  // m
    double ape_rot = 0.0;    // rad
    double rpe_trans_mean = 0.0;
    double rpe_rot_mean = 0.0;
    std::optional<double> map_err;   // m
    std::optional<double> mesh_err;  // m
    std::map<std::string, StageTiming> timings;
};

struct RunArtifacts {
    Trajectory est_traj;
    std::map<int, Vec3> est_map;  // point ids, line endpoints as kLineIdBase + 2*id + e
    MeshMap mesh;
    std::vector<RpeSample> rpe_series;
    Pose alignment;
    std::string histograms_csv;
    std::string diagnostics_csv;
};

// Streams the log through triangulation, optimization, plane detection,
// meshing, and marginalization per the pipeline's feature switches.
MetricsReport run_pipeline(const Config& cfg, const MeasurementLog& log,
                           RunArtifacts* out = nullptr);

// grid samples of the room's wall and floor rectangles
std::vector<Vec3> sample_scene_surfaces(const SceneSpec& scene, double spacing);

std::string traj_to_tum(const Trajectory& traj);
Trajectory parse_tum(const std::string& text);

std::string report_to_json(const MetricsReport& r);
std::string timings_to_csv(const MetricsReport& r);

// est_traj.txt, mesh.obj, mesh.csv, report.json, timings.csv, rpe.csv and the
// optional dump files under `dir` (created if missing)
void write_run_outputs(const std::string& dir, const Config& cfg, const MetricsReport& r,
                       const RunArtifacts& a);

}  // namespace plpvio
