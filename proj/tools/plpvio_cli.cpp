#include <CLI11.hpp>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "plpvio/pipeline.hpp"

using namespace plpvio;

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitDiverged = 3;

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string pipeline;
    int64_t seed = -1;
    bool dump_histograms = false;
    bool dump_diagnostics = false;
    int runs = 10;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_path, "config file (key = value lines)");
    cmd->add_option("--seed", opt.seed, "override the config seed");
    cmd->add_option("--pipeline", opt.pipeline, "P, PP, PL, or PLP")
        ->check(CLI::IsMember({"P", "PP", "PL", "PLP"}));
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_flag("--dump-histograms", opt.dump_histograms, "write detector histograms CSV");
    cmd->add_flag("--dump-diagnostics", opt.dump_diagnostics, "write per-window solver CSV");
}

Config make_config(const CliOptions& opt) {
    Config cfg = opt.config_path.empty() ? Config{} : load_config(opt.config_path);
    if (opt.seed >= 0) cfg.seed = static_cast<uint64_t>(opt.seed);
    if (!opt.pipeline.empty()) cfg.pipeline = pipeline_from_string(opt.pipeline);
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    cfg.dump_histograms = cfg.dump_histograms || opt.dump_histograms;
    cfg.dump_diagnostics = cfg.dump_diagnostics || opt.dump_diagnostics;
    cfg.apply_pipeline();
    return cfg;
}

MeasurementLog make_log(const Config& cfg) {
    const SceneSpec scene = build_room_scene(cfg.seed, cfg.scene);
    return simulate(scene, cfg.traj, CameraModel{}, cfg.noise, cfg.seed);
}

int cmd_simulate(const CliOptions& opt) {
    const Config cfg = make_config(opt);
    const MeasurementLog log = make_log(cfg);
    write_log(cfg.out_dir, log);
    std::cout << "wrote " << log.frames.size() << " frames, " << log.imu.size()
              << " imu samples to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_run(const CliOptions& opt) {
    const Config cfg = make_config(opt);
    if (cfg.log_dir.empty()) throw ConfigError("run requires log_dir in the config");
    if (!std::filesystem::exists(cfg.log_dir)) {
        throw ConfigError("log directory does not exist: " + cfg.log_dir);
    }
    const MeasurementLog log = read_log(cfg.log_dir);
    RunArtifacts art;
    const MetricsReport rep = run_pipeline(cfg, log, &art);
    write_run_outputs(cfg.out_dir, cfg, rep, art);
    std::cout << report_to_json(rep);
    return rep.diverged ? kExitDiverged : 0;
}

int cmd_evaluate(const CliOptions& opt) {
    const Config cfg = make_config(opt);
    if (cfg.log_dir.empty()) throw ConfigError("evaluate requires log_dir in the config");
    std::ifstream est_file(std::filesystem::path(cfg.out_dir) / "est_traj.txt");
    if (!est_file) throw ConfigError("no est_traj.txt in " + cfg.out_dir);
    std::ostringstream est_text;
    est_text << est_file.rdbuf();
    const Trajectory est = parse_tum(est_text.str());
    const MeasurementLog log = read_log(cfg.log_dir);

    nlohmann::json j;
    const auto ape = ape_rmse(est, log.gt_traj);
    if (!ape) throw ConfigError("trajectories have no timestamp overlap");
    j["ape_trans_cm"] = ape->trans_rmse * 100.0;
    j["ape_rot_deg"] = rad2deg(ape->rot_rmse);
    j["n_pairs"] = ape->n_pairs;
    if (const auto series = rpe(est, log.gt_traj, cfg.rpe_delta); series && !series->empty()) {
        double t = 0, r = 0;
        for (const auto& s : *series) {
            t += s.trans;
            r += s.rot;
        }
        j["rpe_trans_mean_cm"] = t / series->size() * 100.0;
        j["rpe_rot_mean_deg"] = rad2deg(r / series->size());
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_ablate(const CliOptions& opt) {
    const Config base = make_config(opt);
    const std::vector<Pipeline> pipelines = {Pipeline::P, Pipeline::PP, Pipeline::PL,
                                             Pipeline::PLP};
    // logs are shared across pipelines for a given seed
    std::vector<MeasurementLog> logs(opt.runs);
    {
        std::atomic<int> next{0};
        auto gen = [&] {
            for (int i = next++; i < opt.runs; i = next++) {
                Config c = base;
                c.seed = base.seed + i;
                logs[i] = make_log(c);
            }
        };
        std::vector<std::thread> pool;
        const unsigned n = std::max(1u, std::thread::hardware_concurrency());
        for (unsigned k = 0; k < n; ++k) pool.emplace_back(gen);
        for (auto& t : pool) t.join();
    }

    struct Job {
        Pipeline pipeline;
        int run = 0;
    };
    std::vector<Job> jobs;
    for (const auto p : pipelines) {
        for (int i = 0; i < opt.runs; ++i) jobs.push_back({p, i});
    }
    std::vector<MetricsReport> reports(jobs.size());
    std::atomic<int> next{0};
    std::mutex io_mutex;
    auto worker = [&] {
        for (int j = next++; j < static_cast<int>(jobs.size()); j = next++) {
            Config c = base;
            c.pipeline = jobs[j].pipeline;
            c.seed = base.seed + jobs[j].run;
            c.apply_pipeline();
            RunArtifacts art;
            reports[j] = run_pipeline(c, logs[jobs[j].run], &art);
            const std::string run_dir = (std::filesystem::path(base.out_dir) /
                                         (to_string(c.pipeline) + "_seed" +
                                          std::to_string(c.seed)))
                                            .string();
            write_run_outputs(run_dir, c, reports[j], art);
            std::lock_guard<std::mutex> lock(io_mutex);
            std::cout << to_string(c.pipeline) << " seed " << c.seed << ": APE "
                      << reports[j].ape_trans * 100.0 << " cm"
                      << (reports[j].diverged ? " (diverged)" : "") << "\n";
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::max(1u, std::thread::hardware_concurrency());
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    bool any_diverged = false;
    nlohmann::json summary;
    std::cout << "\npipeline  ape_cm  rot_deg  map_cm  mesh_cm  diverged\n";
    for (const auto p : pipelines) {
        double ape = 0, rot = 0, map_e = 0, mesh_e = 0;
        int n_map = 0, n_mesh = 0, n_div = 0;
        for (size_t j = 0; j < jobs.size(); ++j) {
            if (jobs[j].pipeline != p) continue;
            ape += reports[j].ape_trans;
            rot += reports[j].ape_rot;
            if (reports[j].map_err) {
                map_e += *reports[j].map_err;
                ++n_map;
            }
            if (reports[j].mesh_err) {
                mesh_e += *reports[j].mesh_err;
                ++n_mesh;
            }
            n_div += reports[j].diverged;
        }
        ape = ape / opt.runs * 100.0;
        rot = rad2deg(rot / opt.runs);
        map_e = n_map ? map_e / n_map * 100.0 : 0.0;
        mesh_e = n_mesh ? mesh_e / n_mesh * 100.0 : 0.0;
        any_diverged |= n_div > 0;
        char row[160];
        std::snprintf(row, sizeof(row), "%-8s  %6.2f  %7.3f  %6.2f  %7.2f  %d\n",
                      to_string(p).c_str(), ape, rot, map_e, mesh_e, n_div);
        std::cout << row;
        summary[to_string(p)] = {{"ape_cm", ape},
                                 {"ape_rot_deg", rot},
                                 {"map_cm", n_map ? nlohmann::json(map_e) : nlohmann::json()},
                                 {"mesh_cm", n_mesh ? nlohmann::json(mesh_e) : nlohmann::json()},
                                 {"runs", opt.runs},
                                 {"diverged", n_div}};
    }
    std::filesystem::create_directories(base.out_dir);
    std::ofstream(std::filesystem::path(base.out_dir) / "summary.json") << summary.dump(2) << "\n";
    return any_diverged ? kExitDiverged : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-line-plane visual-inertial odometry on synthetic room logs"};
    app.require_subcommand(1);

    CliOptions opt;
    auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic measurement log");
    auto* run_cmd = app.add_subcommand("run", "run one pipeline over a log");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "metrics for an existing run directory");
    auto* ablate_cmd = app.add_subcommand("ablate", "all four pipelines over N seeds");
    for (auto* cmd : {simulate_cmd, run_cmd, evaluate_cmd, ablate_cmd}) add_common(cmd, opt);
    ablate_cmd->add_option("--runs", opt.runs, "seeds per pipeline")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);
    try {
        if (simulate_cmd->parsed()) return cmd_simulate(opt);
        if (run_cmd->parsed()) return cmd_run(opt);
        if (evaluate_cmd->parsed()) return cmd_evaluate(opt);
        return cmd_ablate(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
