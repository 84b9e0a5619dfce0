// evcal: event-camera intrinsic calibration from circle-grid recordings.

#include "evcal/ate.hpp"
#include "evcal/pipeline.hpp"
#include "evcal/report.hpp"
#include "evcal/scene_io.hpp"
#include "evcal/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 1;
constexpr int kExitNotConverged = 2;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw evcal::ValidationError("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw evcal::ParseError(std::string("invalid JSON in ") + path + ": " + e.what(), 0);
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw evcal::ValidationError("cannot write " + path);
    out << text;
}

// Pose log or result file; results contribute their spline poses at the
// reference timestamps of accepted frames.
std::vector<evcal::TimedPose> load_trajectory(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw evcal::ValidationError("cannot read " + path);
    char c = 0;
    while (probe.get(c) && std::isspace(static_cast<unsigned char>(c))) {
    }
    if (c != '{') return evcal::read_pose_log(path);
    const auto result = evcal::result_from_json(read_json(path));
    std::vector<evcal::TimedPose> out;
    for (const auto& f : result.frames)
        if (f.refined_pose) out.push_back({f.t_ref, *f.refined_pose});
    return out;
}

struct CalibrateArgs {
    std::string events, config, out, mode;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool print_config = false;
};

int run_calibrate(const CalibrateArgs& a) {
    if (a.print_config) {
        std::cout << evcal::config_to_json(evcal::CalibrationConfig{}).dump(2) << "\n";
        return kExitOk;
    }
    if (a.events.empty() || a.out.empty()) throw CLI::RequiredError("--events and --out");
    evcal::CalibrationConfig config =
        a.config.empty() ? evcal::CalibrationConfig{} : evcal::config_from_json(read_json(a.config));
    if (!a.mode.empty()) config.features.mode = evcal::extraction_mode_from_string(a.mode);
    if (a.seed) config.seed = *a.seed;
    if (a.threads) config.threads = *a.threads;
    config.ransac.seed = config.seed;
    config.validate();

    const auto events = evcal::load_events(a.events, evcal::format_from_path(a.events), config.sensor);
    evcal::CalibrationResult result;
    try {
        result = evcal::calibrate(events, config);
    } catch (const evcal::InfeasibleError& e) {
        std::cerr << "evcal: calibration infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    }
    write_text(a.out, evcal::result_to_json(result).dump(2) + "\n");
    const auto& k = result.intrinsics;
    std::fprintf(stderr,
                 "evcal: %zu frames accepted in %zu segments, fx=%.4f fy=%.4f cx=%.4f cy=%.4f k1=%.5f, "
                 "residual rms %.3g m, solver %s after %d iterations\n",
                 result.stages.accepted, result.segments.size(), k.fx, k.fy, k.cx, k.cy, k.k[0], result.residuals.rms,
                 result.report.termination.c_str(), result.report.iterations);
    return result.report.converged ? kExitOk : kExitNotConverged;
}

int run_simulate(const std::string& scene_path, const std::string& prefix) {
    const auto sim = scene_path.empty() ? evcal::SimulationConfig{} : evcal::scene_from_json(read_json(scene_path));
    const auto out = evcal::generate(sim.scene);
    const bool binary = sim.format == "binary";
    const std::string events_path = prefix + (binary ? "_events.evb" : "_events.csv");
    evcal::save_events(events_path, binary ? evcal::EventFormat::binary : evcal::EventFormat::csv, out.events);
    evcal::write_pose_log(prefix + "_gt.txt", out.gt_poses);
    std::fprintf(stderr, "evcal: wrote %zu events (%zu signal, %zu clutter) to %s and %zu poses\n", out.events.size(),
                 out.signal_events, out.clutter_events, events_path.c_str(), out.gt_poses.size());
    return kExitOk;
}

int run_evaluate(const std::string& est, const std::string& gt) {
    const auto stats = evcal::absolute_trajectory_error(load_trajectory(est), load_trajectory(gt));
    json j = {{"matches", stats.matches}, {"rmse", stats.rmse},     {"mean", stats.mean},
              {"median", stats.median},   {"std", stats.std},       {"unit", "m"}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int run_report(const std::string& result_path, const std::string& events_path, const std::string& out_dir) {
    const auto j = read_json(result_path);
    const auto result = evcal::result_from_json(j);
    evcal::CalibrationConfig config;
    if (j.contains("config")) config = evcal::config_from_json(j.at("config"));
    const auto events = evcal::load_events(events_path, evcal::format_from_path(events_path), config.sensor);
    const auto summary = evcal::write_report(result, events, config.sensor, out_dir);
    for (const auto& w : summary.warnings) std::cerr << "evcal: warning: " << w << "\n";
    std::fprintf(stderr, "evcal: wrote %zu frame images to %s\n", summary.frame_images, out_dir.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-camera intrinsic calibration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", evcal::kToolVersion);

    CalibrateArgs cal;
    auto* calibrate = app.add_subcommand("calibrate", "Calibrate intrinsics from an event recording");
    calibrate->add_option("--events", cal.events, "Event file (.csv or .evb)");
    calibrate->add_option("--config", cal.config, "Calibration config (JSON)");
    calibrate->add_option("--out", cal.out, "Result file to write");
    calibrate->add_option("--mode", cal.mode, "Feature extraction mode")->check(CLI::IsMember({"hard", "soft"}));
    calibrate->add_option("--seed", cal.seed, "RNG seed");
    calibrate->add_option("--threads", cal.threads, "Worker thread cap")->check(CLI::PositiveNumber);
    calibrate->add_flag("--print-config", cal.print_config, "Print the default config and exit");

    std::string scene, prefix;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic event stream and ground truth");
    simulate->add_option("--scene", scene, "Scene config (JSON); defaults when omitted");
    simulate->add_option("--out-prefix", prefix, "Output prefix")->required();

    std::string est, gt;
    auto* evaluate = app.add_subcommand("evaluate-ate", "Absolute trajectory error between two trajectories");
    evaluate->add_option("--est", est, "Estimated trajectory (pose log or result file)")->required();
    evaluate->add_option("--gt", gt, "Ground-truth trajectory (pose log or result file)")->required();

    std::string result_path, events_path, out_dir;
    auto* report = app.add_subcommand("report", "Render diagnostic images for a calibration result");
    report->add_option("--result", result_path, "Result file")->required();
    report->add_option("--events", events_path, "Event file used for calibration")->required();
    report->add_option("--out-dir", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage errors share the failure exit code; --help and --version exit 0.
        return app.exit(e) == 0 ? kExitOk : kExitInfeasible;
    }
    try {
        if (*calibrate) return run_calibrate(cal);
        if (*simulate) return run_simulate(scene, prefix);
        if (*evaluate) return run_evaluate(est, gt);
        if (*report) return run_report(result_path, events_path, out_dir);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "evcal: error: " << e.what() << "\n";
        return kExitInfeasible;
    }
    return kExitInfeasible;
}
