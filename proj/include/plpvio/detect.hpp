#pragma once

#include <array>
#include <vector>

#include "plpvio/geometry.hpp"

namespace plpvio {

struct DetectConfig {
    double height_bin = 0.05;          // m
    double theta_bin = deg2rad(3.0);   // rad
    double dist_bin = 0.10;            // m
    double smooth_sigma = 1.0;         // bins, kernel truncated at 3 sigma
    double score_threshold = 20.0;
    double orientation_gate = deg2rad(5.0);  // patch/line verticality gates
    double max_height = 10.0;                // |h| clamp
    double max_dist = 20.0;                  // d clamp, votes with d < 0 discarded
    double line_weight = 2.0;                // per endpoint sample
    double merge_angle = deg2rad(5.0);
    double merge_dist = 0.05;
    double dedup_angle = deg2rad(5.0);
    double dedup_dist = 0.05;
    double assoc_dist = 0.03;
    double assoc_angle = deg2rad(5.0);
};

// detection-time snapshots of the landmark tables
struct PatchObs {
    int id = -1;
    std::array<Vec3, 3> vertices;
    Vec3 normal = Vec3::UnitZ();
};

struct LineObs {
    int id = -1;
    Vec3 p0 = Vec3::Zero();
    Vec3 p1 = Vec3::Zero();

    Vec3 dir() const { return (p1 - p0).normalized(); }
    Vec3 mid() const { return 0.5 * (p0 + p1); }
};

struct PointObs {
    int id = -1;
    Vec3 p = Vec3::Zero();
};

struct PlaneCandidate {
    bool horizontal = false;
    PlaneParam plane;
    double score = 0.0;
    std::vector<int> patch_ids;
    std::vector<int> line_ids;
};

// optional histogram dumps for diagnostics
struct Histogram1D {
    double bin = 0.05;
    int offset = 0;  // index of the bin centered at 0
    std::vector<double> raw;
    std::vector<double> smoothed;

    double center(int i) const { return (i - offset) * bin; }
};

struct Histogram2D {
    int n_theta = 0;
    double theta_bin = 0.0;
    double dist_bin = 0.0;
    std::vector<double> raw;       // row-major [theta][dist]
    std::vector<double> smoothed;
    int n_dist() const { return n_theta > 0 ? static_cast<int>(raw.size()) / n_theta : 0; }
};

// Transitive-closure grouping of near-collinear lines (angle < merge_angle,
// mutual endpoint-to-line distance < merge_dist). Returns groups of input
// indices; order-independent up to group enumeration by smallest member.
std::vector<std::vector<int>> merge_lines(const std::vector<LineObs>& lines,
                                          const DetectConfig& cfg = {});

// gravity_dir points down; detected planes have n pointing up (opposite g)
std::vector<PlaneCandidate> detect_horizontal_planes(const std::vector<PatchObs>& patches,
                                                     const std::vector<LineObs>& lines,
                                                     const Vec3& gravity_dir,
                                                     const DetectConfig& cfg = {},
                                                     Histogram1D* dump = nullptr);

std::vector<PlaneCandidate> detect_vertical_planes(const std::vector<PatchObs>& patches,
                                                   const std::vector<LineObs>& lines,
                                                   const Vec3& gravity_dir,
                                                   const DetectConfig& cfg = {},
                                                   Histogram2D* dump = nullptr);

// candidates not matching (angle < dedup_angle and |dd| < dedup_dist, up to
// plane sign) any existing plane
std::vector<PlaneCandidate> dedup_planes(const std::vector<PlaneCandidate>& candidates,
                                         const std::vector<PlaneParam>& existing,
                                         const DetectConfig& cfg = {});

struct PlaneAssociation {
    int landmark_id = -1;
    int plane_index = -1;  // into the planes vector passed in
    double distance = 0.0;
};

std::vector<PlaneAssociation> associate_points(const std::vector<PlaneParam>& planes,
                                               const std::vector<PointObs>& points,
                                               const DetectConfig& cfg = {});

std::vector<PlaneAssociation> associate_lines(const std::vector<PlaneParam>& planes,
                                              const std::vector<LineObs>& lines,
                                              const DetectConfig& cfg = {});

}  // namespace plpvio
