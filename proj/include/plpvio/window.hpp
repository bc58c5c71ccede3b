#pragma once

#include <map>
#include <optional>
#include <vector>

#include "plpvio/factors.hpp"
#include "plpvio/geometry.hpp"
#include "plpvio/imu.hpp"
#include "plpvio/mesh.hpp"

namespace plpvio {

struct WindowConfig {
    int max_keyframes = 10;
    int max_iterations = 10;
    double rel_cost_tol = 1e-6;
    double step_tol = 1e-8;
    double lambda_init = 1e-4;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    int max_rejects = 5;
    double cauchy_c = 1.0;  // on whitened residuals
    double min_parallax = deg2rad(1.0);
    double min_line_dihedral = deg2rad(1.0);
    // stricter conditioning before a landmark's depth is trusted for the map,
    // the mesh, and plane detection (a 1-deg track leaves dm-level depth noise)
    double map_min_parallax = deg2rad(5.0);
    double map_min_line_dihedral = deg2rad(5.0);
    int plane_cull_threshold = 30;
    double deassoc_dist = 0.03;
    bool use_lines = true;
    bool use_planes = true;
    bool dense_solver = false;  // skip Schur elimination (oracle mode)
    NoiseModel noise;
    Pose T_bc;
};

struct Keyframe {
    int id = -1;
    double t = 0.0;
    ImuState x;
    // preintegrated IMU from the previous keyframe (unset for the first)
    std::optional<Preintegration> preint;
};

struct PointLandmark {
    int id = -1;
    int anchor = -1;  // keyframe id
    double lambda = 0.0;
    bool initialized = false;
    std::map<int, Vec3> obs;  // keyframe id -> normalized (x, y, 1)
};

struct LineLandmark {
    int id = -1;
    OrthonormalLine line_w;
    bool initialized = false;
    std::map<int, std::pair<Vec3, Vec3>> obs;  // keyframe id -> endpoints
};

struct PlaneLandmark {
    int id = -1;
    PlaneParam pi;
    bool horizontal = false;
};

// Linearized Gaussian prior in square-root form: r(x) = r0 + J0 (x [-] x0),
// over [pose(6), v/ba/bg(9)] blocks in frame_ids order.
struct MarginalPrior {
    bool valid = false;
    VecX r0;
    MatX J0;
    std::vector<int> frame_ids;
    std::vector<ImuState> lin_points;
};

struct SlidingWindow {
    std::vector<Keyframe> frames;
    std::map<int, PointLandmark> points;
    std::map<int, LineLandmark> lines;
    std::map<int, PlaneLandmark> planes;
    std::vector<CoplanarFactor> coplanar;
    MarginalPrior prior;
    int next_plane_id = 0;

    const Keyframe* frame_by_id(int id) const;
    Keyframe* frame_by_id(int id);
};

struct OptimizeStats {
    bool diverged = false;
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    std::vector<double> accepted_costs;
    double cost_prior = 0.0, cost_imu = 0.0, cost_point = 0.0, cost_line = 0.0,
           cost_plane = 0.0;  // at the optimum
    int n_point_factors = 0, n_line_factors = 0, n_plane_factors = 0, n_imu_factors = 0;
};

// ---- landmark initialization ---------------------------------------------

// Multi-view DLT in the anchor camera frame; fails on parallax below the gate
// or depth outside [kMinDepth, kMaxDepth].
bool triangulate_point(const SlidingWindow& w, const WindowConfig& cfg, PointLandmark& pt);

// Intersection of the two back-projection planes of the first and last
// observation; fails when their dihedral angle is below the gate.
bool triangulate_line(const SlidingWindow& w, const WindowConfig& cfg, LineLandmark& ln);

// world-frame endpoint positions of an initialized line, trimmed to the
// anchor observation's extent
std::optional<std::array<Vec3, 2>> line_endpoints_world(const SlidingWindow& w,
                                                        const WindowConfig& cfg,
                                                        const LineLandmark& ln);

std::optional<Vec3> point_position_world(const SlidingWindow& w, const WindowConfig& cfg,
                                         const PointLandmark& pt);

// ---- optimization --------------------------------------------------------

OptimizeStats optimize_window(SlidingWindow& w, const WindowConfig& cfg);

// Prior on the first keyframe's full state. Pins position and yaw (the
// unobservable directions) and gives tilt, velocity, and the biases their
// initial uncertainty so the tilt/accel-bias mode is anchored from the start.
MarginalPrior make_initial_prior(const Keyframe& kf);

// Marginalize the oldest keyframe: fold its IMU factor, anchored-point
// factors, and prior into a new MarginalPrior; re-anchor surviving points.
// Line/plane factors touching the frame are dropped, not marginalized.
void marginalize_oldest(SlidingWindow& w, const WindowConfig& cfg);

// planes with < plane_cull_threshold active associations removed
void cull_planes(SlidingWindow& w, const WindowConfig& cfg);

// Remove coplanar factors whose landmark sits farther than deassoc_dist from
// its plane; patches in `mesh` referencing the landmark are removed too.
// Returns the landmark ids that were de-associated.
std::vector<int> deassociate_outliers(SlidingWindow& w, const WindowConfig& cfg, MeshMap* mesh);

// Lines whose mean whitened reprojection error stays far outside the noise
// band get reset for re-triangulation; a badly initialized line otherwise
// dominates the solve with a useless local model. Returns the reset ids.
std::vector<int> reset_outlier_lines(SlidingWindow& w, const WindowConfig& cfg);

// ---- low-level marginalization kernels (exposed for oracle tests) --------

// Schur-complement `marg` indices out of (H, b); returns reduced (H, b)
// over `keep` indices in order.
void schur_marginalize(const MatX& H, const VecX& b, const std::vector<int>& keep,
                       const std::vector<int>& marg, MatX* H_out, VecX* b_out);

// H = J0^T J0, b = J0^T r0 with eigenvalues clamped to >= 0
void sqrt_factorize(const MatX& H, const VecX& b, MatX* J0, VecX* r0);

}  // namespace plpvio
