#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "plpvio/geometry.hpp"
#include "plpvio/mesh.hpp"

namespace plpvio {

using Trajectory = std::vector<std::pair<double, Pose>>;

struct ApeResult {
    double trans_rmse = 0.0;  // m
    double rot_rmse = 0.0;    // rad
    Pose alignment;           // maps estimate into the ground-truth frame
    size_t n_pairs = 0;
};

// SE(3) Umeyama alignment (no scale), then RMSE of translation residuals and
// geodesic rotation errors; poses associated by timestamp within assoc_tol.
// nullopt when no timestamps overlap.
std::optional<ApeResult> ape_rmse(const Trajectory& est, const Trajectory& gt,
                                  double assoc_tol = 0.005);

struct RpeSample {
    double t = 0.0;
    double trans = 0.0;  // m over the interval
    double rot = 0.0;    // rad over the interval
};

// TUM relative pose error over intervals of `delta` seconds.
// Throws std::invalid_argument on non-monotonic timestamps.
std::optional<std::vector<RpeSample>> rpe(const Trajectory& est, const Trajectory& gt,
                                          double delta, double assoc_tol = 0.005);

// RMSE over id-matched landmarks with the estimate moved by `alignment`;
// nullopt when no ids match.
std::optional<double> map_error(const std::map<int, Vec3>& est, const std::map<int, Vec3>& gt,
                                const Pose& alignment = Pose());

// area-weighted uniform surface samples, `density` points per m^2
std::vector<Vec3> sample_mesh(const MeshMap& mesh, double density, uint64_t seed);

// Mean nearest-neighbor distance (m) from mesh samples (moved by `alignment`)
// to the ground-truth cloud, via a uniform spatial grid; nullopt when the mesh
// or the cloud is empty.
std::optional<double> mesh_error(const MeshMap& mesh, const std::vector<Vec3>& gt_cloud,
                                 const Pose& alignment = Pose(), double density = 1000.0,
                                 uint64_t seed = 0);

// uniform hash grid for nearest-neighbor queries against a fixed cloud
struct PointGrid {
    explicit PointGrid(const std::vector<Vec3>& cloud, double cell = 0.25);
    double nearest_distance(const Vec3& q) const;

    std::vector<Vec3> points;
    double cell = 0.25;
    std::map<std::array<int, 3>, std::vector<int>> cells;
};

}  // namespace plpvio
