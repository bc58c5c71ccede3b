#include "plpvio/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "plpvio/cdt.hpp"
#include "plpvio/detect.hpp"

namespace plpvio {

namespace {

using Clock = std::chrono::steady_clock;

struct StageTimer {
    StageTiming& stage;
    Clock::time_point start = Clock::now();

    explicit StageTimer(StageTiming& s) : stage(s) {}
    ~StageTimer() {
        stage.total_ms += std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        ++stage.windows;
    }
};

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// cumulative association bookkeeping for lifecycle culling
struct PlaneRecord {
    int birth_frame = 0;
    std::set<int> ever_associated;
};

struct Runner {
    const Config& cfg;
    const MeasurementLog& log;
    WindowConfig wcfg;
    SlidingWindow w;
    MeshMap mesh;
    std::set<int> blacklist;  // de-associated landmarks never re-associate
    std::map<int, PlaneRecord> plane_records;
    std::map<int, std::pair<double, Pose>> traj_rec;  // frame id -> (t, pose)
    std::map<int, Vec3> map_rec;
    MetricsReport rep;
    RunArtifacts art;
    std::ostringstream histograms, diagnostics;
    size_t imu_cursor = 0;
    bool prev_is_keyframe = true;
    int windows_optimized = 0;

    Runner(const Config& c, const MeasurementLog& l) : cfg(c), log(l) {
        wcfg = cfg.window;
        wcfg.T_bc = camera_extrinsics();
        wcfg.noise.focal = log.camera.fx;
        rep.pipeline = to_string(cfg.pipeline);
        rep.seed = cfg.seed;
        diagnostics << "frame,iterations,cost_prior,cost_imu,cost_point,cost_line,cost_plane,"
                       "n_points,n_lines,n_planes\n";
    }

    Vec3 unproject(const Vec2& uv) const { return log.camera.unproject(uv); }

    // ---- per-frame steps --------------------------------------------------

    void add_observations(const FrameObs& f) {
        for (const auto& pt : f.points) {
            auto& lm = w.points[pt.id];
            lm.id = pt.id;
            lm.obs[f.frame_id] = unproject(pt.uv);
        }
        if (!wcfg.use_lines) return;
        for (const auto& ln : f.lines) {
            auto& lm = w.lines[ln.id];
            lm.id = ln.id;
            lm.obs[f.frame_id] = {unproject(ln.s), unproject(ln.e)};
        }
    }

    void remove_frame_observations(int frame_id) {
        for (auto it = w.points.begin(); it != w.points.end();) {
            it->second.obs.erase(frame_id);
            it = it->second.obs.empty() ? w.points.erase(it) : std::next(it);
        }
        for (auto it = w.lines.begin(); it != w.lines.end();) {
            it->second.obs.erase(frame_id);
            it = it->second.obs.empty() ? w.lines.erase(it) : std::next(it);
        }
    }

    Preintegration preintegrate(double t0, double t1, const Vec3& ba, const Vec3& bg) {
        while (imu_cursor + 1 < log.imu.size() && log.imu[imu_cursor + 1].t <= t0 + 1e-9) {
            ++imu_cursor;
        }
        size_t i = imu_cursor;
        Preintegration pre(log.imu[i].a, log.imu[i].w, ba, bg, cfg.noise.imu);
        while (i + 1 < log.imu.size() && log.imu[i + 1].t <= t1 + 1e-9) {
            pre.integrate(log.imu[i + 1].t - log.imu[i].t, log.imu[i + 1].a, log.imu[i + 1].w);
            ++i;
        }
        return pre;
    }

    ImuState predict(const Keyframe& prev, const Preintegration& pre) {
        const double dt = pre.sum_dt();
        const Vec3 g = gravity_world();
        ImuState x = prev.x;
        x.pose.p = prev.x.pose.p + prev.x.v * dt + 0.5 * g * dt * dt +
                   prev.x.pose.q * pre.delta_p();
        x.v = prev.x.v + g * dt + prev.x.pose.q * pre.delta_v();
        x.pose.q = (prev.x.pose.q * pre.delta_q()).normalized();
        return x;
    }

    // Rotation-compensated parallax / tracked-count test between the incoming
    // frame and the newest keyframe. q_rel is the gyro-integrated body
    // rotation from the newest keyframe to the incoming frame; compensating it
    // leaves only translation-induced parallax, so pure rotation does not
    // spawn keyframes and the window keeps a useful triangulation baseline.
    bool incoming_is_keyframe(const FrameObs& f, const Quat& q_rel) const {
        if (w.frames.empty()) return true;
        const int prev_id = w.frames.back().id;
        const Quat q_cc = Quat(wcfg.T_bc.q.conjugate() * q_rel * wcfg.T_bc.q);
        int tracked = 0;
        double parallax = 0.0;
        for (const auto& pt : f.points) {
            auto it = w.points.find(pt.id);
            if (it == w.points.end()) continue;
            auto ob = it->second.obs.find(prev_id);
            if (ob == it->second.obs.end()) continue;
            const Vec3 d = q_cc * log.camera.unproject(pt.uv);
            if (d.z() < 1e-6) continue;
            ++tracked;
            parallax += (d.head<2>() / d.z() - ob->second.head<2>()).norm() * log.camera.fx;
        }
        if (tracked < cfg.keyframe_min_tracked) return true;
        return parallax / tracked > cfg.keyframe_parallax_px;
    }

    void triangulate_new() {
        for (auto& [id, pt] : w.points) {
            if (!pt.initialized && pt.obs.size() >= 2) triangulate_point(w, wcfg, pt);
        }
        if (!wcfg.use_lines) return;
        for (auto& [id, ln] : w.lines) {
            if (!ln.initialized && ln.obs.size() >= 2) triangulate_line(w, wcfg, ln);
        }
    }

    // ---- landmark snapshots ----------------------------------------------

    // Mean whitened squared reprojection error; landmarks far outside the
    // noise band stay out of the map and the mesh until they recover.
    bool point_healthy(const PointLandmark& pt) const {
        constexpr double kMaxMeanSq = 9.0;
        const Keyframe* fa = w.frame_by_id(pt.anchor);
        if (!fa) return false;
        const double inv_sigma = 1.0 / wcfg.noise.reproj_sigma();
        double sum_sq = 0.0;
        int n = 0;
        for (const auto& [fid, obs_j] : pt.obs) {
            if (fid == pt.anchor) continue;
            const Keyframe* fj = w.frame_by_id(fid);
            if (!fj) continue;
            PointReprojFactor fac;
            fac.frame_i = pt.anchor;
            fac.frame_j = fid;
            fac.obs_i = pt.obs.at(pt.anchor);
            fac.obs_j = obs_j;
            const PointReprojEval e =
                point_reproj_residual(fa->x, fj->x, pt.lambda, fac, wcfg.T_bc);
            if (e.behind_camera) return false;
            sum_sq += (e.residual * inv_sigma).squaredNorm();
            ++n;
        }
        if (n == 0 || sum_sq / n > kMaxMeanSq) return false;
        // a low-parallax track fits its rays at any depth; require the same
        // conditioning as triangulation before the depth is trusted
        const Pose T_wc0 = fa->x.pose * wcfg.T_bc;
        const Vec3 f0 = pt.obs.at(pt.anchor).normalized();
        double max_parallax = 0.0;
        for (const auto& [fid, obs_j] : pt.obs) {
            if (fid == pt.anchor) continue;
            const Keyframe* fj = w.frame_by_id(fid);
            if (!fj) continue;
            const Pose T_wck = fj->x.pose * wcfg.T_bc;
            const Vec3 dir = (T_wc0.q.conjugate() * (T_wck.q * obs_j)).normalized();
            max_parallax =
                std::max(max_parallax, std::acos(std::clamp(f0.dot(dir), -1.0, 1.0)));
        }
        return max_parallax >= wcfg.map_min_parallax;
    }

    std::map<int, Vec3> point_positions() const {
        std::map<int, Vec3> out;
        for (const auto& [id, pt] : w.points) {
            if (!pt.initialized || !point_healthy(pt)) continue;
            if (auto p = point_position_world(w, wcfg, pt)) out[id] = *p;
        }
        return out;
    }

    bool line_healthy(const LineLandmark& ln) const {
        constexpr double kMaxMeanSq = 9.0;
        const double inv_sigma = 1.0 / wcfg.noise.reproj_sigma();
        double sum_sq = 0.0;
        int n = 0;
        for (const auto& [fid, seg] : ln.obs) {
            const Keyframe* f = w.frame_by_id(fid);
            if (!f) continue;
            LineReprojFactor fac;
            fac.frame = fid;
            fac.line_id = ln.id;
            fac.s = seg.first;
            fac.e = seg.second;
            const LineReprojEval e = line_reproj_residual(f->x, ln.line_w, fac, wcfg.T_bc);
            if (e.degenerate) continue;
            sum_sq += (e.residual * inv_sigma).squaredNorm();
            ++n;
        }
        if (n == 0 || sum_sq / n > kMaxMeanSq) return false;
        // dihedral conditioning, mirroring the triangulation gate
        auto plane_normal = [&](int fid, const std::pair<Vec3, Vec3>& seg) {
            const Keyframe* f = w.frame_by_id(fid);
            const Pose T_wc = f->x.pose * wcfg.T_bc;
            return Vec3(T_wc.q * seg.first.cross(seg.second)).normalized();
        };
        const auto& first = *ln.obs.begin();
        const auto& last = *ln.obs.rbegin();
        if (first.first == last.first) return false;
        if (!w.frame_by_id(first.first) || !w.frame_by_id(last.first)) return false;
        const Vec3 n1 = plane_normal(first.first, first.second);
        const Vec3 n2 = plane_normal(last.first, last.second);
        const double dihedral =
            std::acos(std::clamp(std::abs(n1.dot(n2)), 0.0, 1.0));
        return dihedral >= wcfg.map_min_line_dihedral;
    }

    std::map<int, std::array<Vec3, 2>> line_endpoints() const {
        std::map<int, std::array<Vec3, 2>> out;
        for (const auto& [id, ln] : w.lines) {
            if (!ln.initialized || !line_healthy(ln)) continue;
            if (auto e = line_endpoints_world(w, wcfg, ln)) out[id] = *e;
        }
        return out;
    }

    VertexResolver make_resolver(const std::map<int, Vec3>& pts,
                                 const std::map<int, std::array<Vec3, 2>>& lns) const {
        return [&pts, &lns](const VertexRef& ref) -> std::optional<Vec3> {
            if (ref.id < 0) return std::nullopt;
            if (ref.kind == VertexRef::Kind::Point) {
                auto it = pts.find(ref.id);
                if (it == pts.end()) return std::nullopt;
                return it->second;
            }
            auto it = lns.find(ref.id);
            if (it == lns.end()) return std::nullopt;
            return it->second[ref.endpoint];
        };
    }

    // Resolver over every initialized landmark still in the window, used to
    // refresh existing patches: a vertex whose health gate flickers keeps its
    // patch alive instead of tearing it out of the mesh.
    VertexResolver make_refresh_resolver() const {
        return [this](const VertexRef& ref) -> std::optional<Vec3> {
            if (ref.id < 0) return std::nullopt;
            if (ref.kind == VertexRef::Kind::Point) {
                auto it = w.points.find(ref.id);
                if (it == w.points.end() || !it->second.initialized) return std::nullopt;
                return point_position_world(w, wcfg, it->second);
            }
            auto it = w.lines.find(ref.id);
            if (it == w.lines.end() || !it->second.initialized) return std::nullopt;
            const auto e = line_endpoints_world(w, wcfg, it->second);
            if (!e) return std::nullopt;
            return (*e)[ref.endpoint];
        };
    }

    // ---- meshing + detection ---------------------------------------------

    std::vector<MeshPatch> build_frame_mesh(const FrameObs& f,
                                            const std::map<int, Vec3>& pts,
                                            const std::map<int, std::array<Vec3, 2>>& lns) {
        std::vector<Vec2> verts;
        std::vector<VertexRef> refs;
        std::vector<std::array<int, 2>> segments;
        for (const auto& pt : f.points) {
            if (!pts.count(pt.id)) continue;
            verts.push_back(unproject(pt.uv).head<2>());
            refs.push_back({VertexRef::Kind::Point, pt.id, 0});
        }
        if (wcfg.use_lines) {
            for (const auto& ln : f.lines) {
                if (!lns.count(ln.id)) continue;
                const int a = static_cast<int>(verts.size());
                verts.push_back(unproject(ln.s).head<2>());
                refs.push_back({VertexRef::Kind::LineEndpoint, ln.id, 0});
                verts.push_back(unproject(ln.e).head<2>());
                refs.push_back({VertexRef::Kind::LineEndpoint, ln.id, 1});
                segments.push_back({a, a + 1});
            }
        }
        if (verts.size() < 3) return {};

        const Mesh2D m2 = cdt_2d(verts, segments);
        std::vector<VertexRef> vrefs(m2.vertices.size());
        for (size_t i = 0; i < refs.size(); ++i) {
            if (i < m2.input_to_vertex.size() && m2.input_to_vertex[i] >= 0) {
                vrefs[m2.input_to_vertex[i]] = refs[i];
            }
        }
        const Pose T_wc = w.frames.back().x.pose * wcfg.T_bc;
        const auto lifted = lift_mesh(m2, vrefs, make_resolver(pts, lns), T_wc.p, f.frame_id);
        auto out = filter_patches(lifted, cfg.mesh_filter);
        if (std::getenv("PLPVIO_TRACE_MESH")) {
            fprintf(stderr, "mesh f=%d healthy_pts=%zu healthy_lns=%zu verts=%zu tris=%zu lifted=%zu filtered=%zu\n",
                    f.frame_id, pts.size(), lns.size(), verts.size(), m2.triangles.size(), lifted.size(), out.size());
            if (f.frame_id == 100 || f.frame_id == 300) {
                for (const auto& [id, p] : pts) {
                    fprintf(stderr, "  snap %d %d %.4f %.4f %.4f\n", f.frame_id, id, p.x(), p.y(), p.z());
                }
                for (size_t i = 0; i < lifted.size(); ++i) {
                    std::vector<double> angs;
                    for (size_t j = 0; j < lifted.size(); ++j) {
                        if (i == j) continue;
                        int common = 0;
                        for (const auto& r : lifted[i].refs)
                            for (const auto& s : lifted[j].refs)
                                if (r == s) ++common;
                        if (common != 2) continue;
                        angs.push_back(rad2deg(std::acos(std::min(
                            1.0, std::abs(lifted[i].normal.dot(lifted[j].normal))))));
                    }
                    std::sort(angs.begin(), angs.end());
                    fprintf(stderr, "  patch %zu nbrs=%zu angles:", i, angs.size());
                    for (double a : angs) fprintf(stderr, " %.1f", a);
                    fprintf(stderr, "\n");
                }
            }
        }
        return out;
    }

    // Votes come from the whole fused mesh, not just this frame's patches:
    // a single frame rarely meets the detection threshold on its own.
    void detect_and_associate(int frame_id, const std::map<int, Vec3>& pts,
                              const std::map<int, std::array<Vec3, 2>>& lns) {
        std::vector<PatchObs> patch_obs;
        int pi = 0;
        for (const auto& [key, p] : mesh.patches) {
            patch_obs.push_back({pi++, p.vertices, p.normal});
        }
        std::vector<LineObs> line_obs;
        for (const auto& [id, e] : lns) line_obs.push_back({id, e[0], e[1]});

        // one representative (the longest member) per merged group
        std::vector<LineObs> voting_lines;
        for (const auto& group : merge_lines(line_obs, cfg.detect)) {
            int best = group[0];
            for (int i : group) {
                if ((line_obs[i].p1 - line_obs[i].p0).norm() >
                    (line_obs[best].p1 - line_obs[best].p0).norm()) {
                    best = i;
                }
            }
            voting_lines.push_back(line_obs[best]);
        }

        const Vec3 g_dir = gravity_world().normalized();
        Histogram1D h1;
        Histogram2D h2;
        auto cands = detect_horizontal_planes(patch_obs, voting_lines, g_dir, cfg.detect,
                                              cfg.dump_histograms ? &h1 : nullptr);
        const auto vert = detect_vertical_planes(patch_obs, voting_lines, g_dir, cfg.detect,
                                                 cfg.dump_histograms ? &h2 : nullptr);
        cands.insert(cands.end(), vert.begin(), vert.end());
        if (cfg.dump_histograms) dump_histograms(frame_id, h1, h2);

        std::vector<PlaneParam> existing;
        std::vector<int> plane_ids;
        for (const auto& [id, pl] : w.planes) {
            existing.push_back(pl.pi);
            plane_ids.push_back(id);
        }
        for (const auto& c : dedup_planes(cands, existing, cfg.detect)) {
            PlaneLandmark pl;
            pl.id = w.next_plane_id++;
            pl.pi = c.plane;
            pl.horizontal = c.horizontal;
            w.planes[pl.id] = pl;
            plane_records[pl.id].birth_frame = frame_id;
            existing.push_back(pl.pi);
            plane_ids.push_back(pl.id);
        }
        if (existing.empty()) {
            w.coplanar.clear();
            return;
        }

        // associations rebuilt each window; de-associated landmarks stay out
        std::vector<PointObs> point_obs;
        for (const auto& [id, p] : pts) {
            if (!blacklist.count(id)) point_obs.push_back({id, p});
        }
        std::vector<LineObs> assoc_lines;
        for (const auto& l : line_obs) {
            if (!blacklist.count(l.id)) assoc_lines.push_back(l);
        }
        w.coplanar.clear();
        for (const auto& a : associate_points(existing, point_obs, cfg.detect)) {
            w.coplanar.push_back({plane_ids[a.plane_index], a.landmark_id, LandmarkKind::Point});
            plane_records[plane_ids[a.plane_index]].ever_associated.insert(a.landmark_id);
        }
        for (const auto& a : associate_lines(existing, assoc_lines, cfg.detect)) {
            w.coplanar.push_back({plane_ids[a.plane_index], a.landmark_id, LandmarkKind::Line});
            plane_records[plane_ids[a.plane_index]].ever_associated.insert(kLineAssocBase +
                                                                           a.landmark_id);
        }
    }

    static constexpr int kLineAssocBase = 10000000;

    // lifecycle cull on cumulative associations after a settling period
    void cull_stale_planes(int frame_id) {
        for (auto it = w.planes.begin(); it != w.planes.end();) {
            const auto& rec = plane_records[it->first];
            const bool mature = frame_id - rec.birth_frame >= wcfg.max_keyframes;
            if (mature &&
                static_cast<int>(rec.ever_associated.size()) < wcfg.plane_cull_threshold) {
                const int dead = it->first;
                std::erase_if(w.coplanar,
                              [dead](const CoplanarFactor& f) { return f.plane_id == dead; });
                plane_records.erase(dead);
                it = w.planes.erase(it);
            } else {
                ++it;
            }
        }
    }

    void dump_histograms(int frame_id, const Histogram1D& h1, const Histogram2D& h2) {
        if (histograms.tellp() == 0) {
            histograms << "frame,kind,i,j,center_a,center_b,raw,smoothed\n";
        }
        for (size_t i = 0; i < h1.raw.size(); ++i) {
            histograms << frame_id << ",height," << i << ",0," << h1.center(int(i)) << ",0,"
                       << h1.raw[i] << "," << h1.smoothed[i] << "\n";
        }
        for (int ti = 0; ti < h2.n_theta; ++ti) {
            for (int di = 0; di < h2.n_dist(); ++di) {
                const size_t k = size_t(ti) * h2.n_dist() + di;
                if (h2.raw[k] == 0 && h2.smoothed[k] < 1e-12) continue;
                histograms << frame_id << ",azimuth," << ti << "," << di << ","
                           << ti * h2.theta_bin << "," << di * h2.dist_bin << "," << h2.raw[k]
                           << "," << h2.smoothed[k] << "\n";
            }
        }
    }

    // ---- bookkeeping ------------------------------------------------------

    void record_estimates() {
        for (const auto& f : w.frames) traj_rec[f.id] = {f.t, f.x.pose};
        for (const auto& [id, p] : point_positions()) map_rec[id] = p;
        for (const auto& [id, e] : line_endpoints()) {
            map_rec[SceneSpec::kLineIdBase + 2 * id] = e[0];
            map_rec[SceneSpec::kLineIdBase + 2 * id + 1] = e[1];
        }
    }

    void marginalize() {
        StageTimer timer(rep.timings["marginalization"]);
        std::set<int> points_before, lines_before;
        for (const auto& [id, pt] : w.points) points_before.insert(id);
        for (const auto& [id, ln] : w.lines) lines_before.insert(id);

        marginalize_oldest(w, wcfg);

        std::set<int> dead_points, dead_lines;
        for (int id : points_before) {
            if (!w.points.count(id)) dead_points.insert(id);
        }
        for (int id : lines_before) {
            if (!w.lines.count(id)) dead_lines.insert(id);
        }
        // patches losing a landmark keep their last optimized geometry
        freeze_patches_referencing(mesh, [&](const VertexRef& ref) {
            return ref.kind == VertexRef::Kind::Point ? dead_points.count(ref.id) > 0
                                                      : dead_lines.count(ref.id) > 0;
        });
    }

    // ---- main loop ---------------------------------------------------------

    bool process_frame(const FrameObs& f) {
        if (w.frames.empty()) {
            Keyframe kf;
            kf.id = f.frame_id;
            kf.t = f.t;
            kf.x.pose = log.gt_traj.front().second;
            if (log.gt_traj.size() > 1) {
                kf.x.v = (log.gt_traj[1].second.p - log.gt_traj[0].second.p) /
                         (log.gt_traj[1].first - log.gt_traj[0].first);
            }
            w.frames.push_back(kf);
            w.prior = make_initial_prior(w.frames.back());
            add_observations(f);
            record_estimates();
            return true;
        }

        if (!prev_is_keyframe && w.frames.size() >= 2) {
            const int drop = w.frames.back().id;
            traj_rec[drop] = {w.frames.back().t, w.frames.back().x.pose};
            remove_frame_observations(drop);
            w.frames.pop_back();
        }
        Keyframe kf;
        kf.id = f.frame_id;
        kf.t = f.t;
        const Keyframe& prev = w.frames.back();
        kf.preint = preintegrate(prev.t, f.t, prev.x.ba, prev.x.bg);
        kf.x = predict(prev, *kf.preint);
        prev_is_keyframe = incoming_is_keyframe(f, kf.preint->delta_q());
        w.frames.push_back(std::move(kf));
        add_observations(f);
        triangulate_new();

        OptimizeStats stats;
        {
            StageTimer timer(rep.timings["optimization"]);
            stats = optimize_window(w, wcfg);
        }
        ++windows_optimized;
        if (stats.diverged) {
            rep.diverged = true;
            return false;
        }
        if (wcfg.use_lines) reset_outlier_lines(w, wcfg);

        if (wcfg.use_planes) {
            const auto removed = deassociate_outliers(w, wcfg, &mesh);
            blacklist.insert(removed.begin(), removed.end());

            const auto pts = point_positions();
            const auto lns = line_endpoints();
            std::vector<MeshPatch> patches;
            {
                StageTimer timer(rep.timings["mesh_creation"]);
                patches = build_frame_mesh(f, pts, lns);
                fuse_mesh(mesh, patches);
                refresh_mesh(mesh, make_refresh_resolver());
            }
            {
                StageTimer timer(rep.timings["plane_detection"]);
                detect_and_associate(f.frame_id, pts, lns);
                cull_stale_planes(f.frame_id);
            }
        }

        record_estimates();
        if (cfg.dump_diagnostics) {
            diagnostics << f.frame_id << "," << stats.iterations << "," << stats.cost_prior << ","
                        << stats.cost_imu << "," << stats.cost_point << "," << stats.cost_line
                        << "," << stats.cost_plane << "," << w.points.size() << ","
                        << w.lines.size() << "," << w.planes.size() << "\n";
        }

        if (static_cast<int>(w.frames.size()) > wcfg.max_keyframes) marginalize();
        return true;
    }

    MetricsReport finish() {
        rep.n_frames = static_cast<int>(traj_rec.size());
        rep.n_planes = w.planes.size();
        rep.n_mesh_patches = mesh.size();

        for (const auto& [id, rec] : traj_rec) art.est_traj.emplace_back(rec.first, rec.second);
        art.est_map = map_rec;
        art.mesh = mesh;
        art.histograms_csv = histograms.str();
        art.diagnostics_csv = diagnostics.str();

        if (const auto ape = ape_rmse(art.est_traj, log.gt_traj)) {
            rep.ape_trans = ape->trans_rmse;
            rep.ape_rot = ape->rot_rmse;
            art.alignment = ape->alignment;
        }
        if (const auto series = rpe(art.est_traj, log.gt_traj, cfg.rpe_delta)) {
            art.rpe_series = *series;
            for (const auto& s : *series) {
                rep.rpe_trans_mean += s.trans;
                rep.rpe_rot_mean += s.rot;
            }
            if (!series->empty()) {
                rep.rpe_trans_mean /= series->size();
                rep.rpe_rot_mean /= series->size();
            }
        }

        std::map<int, Vec3> gt_map;
        for (size_t i = 0; i < log.scene.points.size(); ++i) {
            gt_map[static_cast<int>(i)] = log.scene.points[i];
        }
        for (size_t i = 0; i < log.scene.lines.size(); ++i) {
            gt_map[SceneSpec::kLineIdBase + 2 * int(i)] = log.scene.lines[i][0];
            gt_map[SceneSpec::kLineIdBase + 2 * int(i) + 1] = log.scene.lines[i][1];
        }
        rep.map_err = map_error(art.est_map, gt_map, art.alignment);
        if (mesh.size() > 0) {
            const auto cloud = sample_scene_surfaces(log.scene, cfg.gt_surface_spacing);
            rep.mesh_err =
                mesh_error(mesh, cloud, art.alignment, cfg.mesh_sample_density, cfg.seed);
        }
        return rep;
    }
};

}  // namespace

MetricsReport run_pipeline(const Config& cfg, const MeasurementLog& log, RunArtifacts* out) {
    Runner runner(cfg, log);
    for (const auto& f : log.frames) {
        if (!runner.process_frame(f)) break;
    }
    MetricsReport rep = runner.finish();
    if (out) *out = std::move(runner.art);
    return rep;
}

std::vector<Vec3> sample_scene_surfaces(const SceneSpec& scene, double spacing) {
    std::vector<Vec3> out;
    const double s = scene.side / 2.0;
    for (double x = -s; x <= s + 1e-9; x += spacing) {
        for (double y = -s; y <= s + 1e-9; y += spacing) {
            out.emplace_back(x, y, 0.0);  // floor
        }
    }
    for (double u = -s; u <= s + 1e-9; u += spacing) {
        for (double z = 0; z <= scene.wall_height + 1e-9; z += spacing) {
            out.emplace_back(s, u, z);
            out.emplace_back(-s, u, z);
            out.emplace_back(u, s, z);
            out.emplace_back(u, -s, z);
        }
    }
    return out;
}

std::string traj_to_tum(const Trajectory& traj) {
    std::ostringstream os;
    for (const auto& [t, pose] : traj) {
        os << fmt9(t) << " " << fmt9(pose.p.x()) << " " << fmt9(pose.p.y()) << " "
           << fmt9(pose.p.z()) << " " << fmt9(pose.q.x()) << " " << fmt9(pose.q.y()) << " "
           << fmt9(pose.q.z()) << " " << fmt9(pose.q.w()) << "\n";
    }
    return os.str();
}

Trajectory parse_tum(const std::string& text) {
    Trajectory out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) continue;
        out.emplace_back(t, Pose(Vec3(tx, ty, tz), Quat(qw, qx, qy, qz)));
    }
    return out;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["pipeline"] = r.pipeline;
    j["seed"] = r.seed;
    j["diverged"] = r.diverged;
    j["n_frames"] = r.n_frames;
    j["n_planes"] = r.n_planes;
    j["n_mesh_patches"] = r.n_mesh_patches;
    j["ape_trans_cm"] = r.ape_trans * 100.0;
    j["ape_rot_deg"] = rad2deg(r.ape_rot);
    j["rpe_trans_mean_cm"] = r.rpe_trans_mean * 100.0;
    j["rpe_rot_mean_deg"] = rad2deg(r.rpe_rot_mean);
    j["map_error_cm"] = r.map_err ? nlohmann::json(*r.map_err * 100.0) : nlohmann::json();
    j["mesh_error_cm"] = r.mesh_err ? nlohmann::json(*r.mesh_err * 100.0) : nlohmann::json();
    nlohmann::json timings;
    for (const auto& [stage, t] : r.timings) {
        timings[stage] = {{"total_ms", t.total_ms},
                          {"windows", t.windows},
                          {"per_window_ms", t.per_window_ms()}};
    }
    j["timings"] = timings;
    return j.dump(2) + "\n";
}

std::string timings_to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "stage,total_ms,windows,per_window_ms\n";
    for (const auto& [stage, t] : r.timings) {
        os << stage << "," << t.total_ms << "," << t.windows << "," << t.per_window_ms() << "\n";
    }
    return os.str();
}

void write_run_outputs(const std::string& dir, const Config& cfg, const MetricsReport& r,
                       const RunArtifacts& a) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream f(fs::path(dir) / name);
        f << content;
    };
    write("est_traj.txt", traj_to_tum(a.est_traj));
    write("report.json", report_to_json(r));
    write("timings.csv", timings_to_csv(r));
    write("mesh.obj", mesh_to_obj(a.mesh));
    write("mesh.csv", mesh_to_csv(a.mesh));
    std::ostringstream rpe_csv;
    rpe_csv << "t,trans_m,rot_rad\n";
    for (const auto& s : a.rpe_series) {
        rpe_csv << s.t << "," << s.trans << "," << s.rot << "\n";
    }
    write("rpe.csv", rpe_csv.str());
    std::ostringstream map_csv;
    map_csv << "landmark_id,x,y,z\n";
    for (const auto& [id, p] : a.est_map) {
        map_csv << id << "," << p.x() << "," << p.y() << "," << p.z() << "\n";
    }
    write("est_map.csv", map_csv.str());
    if (cfg.dump_histograms) write("histograms.csv", a.histograms_csv);
    if (cfg.dump_diagnostics) write("diagnostics.csv", a.diagnostics_csv);
}

}  // namespace plpvio
