#include "evcal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <sstream>

namespace evcal {

using nlohmann::json;

void CalibrationConfig::validate() const {
    if (sensor.width <= 0 || sensor.height <= 0) throw ValidationError("sensor size must be positive");
    pattern.validate();
    windowing.validate();
    if (!(clustering.eps > 0.0) || clustering.min_pts < 1) throw ValidationError("invalid clustering parameters");
    if (features.k < 1 || !(features.tol_d > 0.0) || !(features.tol_c > 0.0) || !(features.tol_soft > 0.0)) {
        throw ValidationError("invalid feature parameters");
    }
    if (!(grid.tol_grid > 0.0) || grid.max_hull_vertices < 4) throw ValidationError("invalid grid parameters");
    if (ransac.iterations < 1 || !(ransac.inlier_tol_px > 0.0) || !(ransac.min_inlier_fraction > 0.0) ||
        ransac.min_inlier_fraction > 1.0) {
        throw ValidationError("invalid RANSAC parameters");
    }
    if (!(max_trans_vel > 0.0) || !(max_rot_vel > 0.0)) throw ValidationError("velocity bounds must be positive");
    if (spline.degree < 1 || spline.degree > kMaxSplineDegree || !(spline.max_gap_s > 0.0) ||
        !(spline.control_multiplier > 0.0)) {
        throw ValidationError("invalid spline parameters");
    }
    if (solver.max_iterations < 1) throw ValidationError("solver needs at least one iteration");
    if (threads < 1) throw ValidationError("threads must be >= 1");
}

double CalibrationConfig::augment_dt_max_us() const {
    return augment.dt_max_us > 0.0 ? augment.dt_max_us
                                   : windowing.max_mult * static_cast<double>(windowing.tau_us) / 2.0;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& section) {
    if (!j.is_object()) throw ValidationError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            throw ValidationError("unknown config key '" + section + "." + key + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& value) {
    if (!j.contains(key)) return;
    try {
        value = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace

json config_to_json(const CalibrationConfig& c) {
    json j;
    j["sensor"] = {{"width", c.sensor.width}, {"height", c.sensor.height}};
    j["pattern"] = {{"rows", c.pattern.rows},
                    {"cols", c.pattern.cols},
                    {"spacing", c.pattern.spacing},
                    {"circle_radius", c.pattern.circle_radius},
                    {"asymmetric", c.pattern.asymmetric}};
    j["windowing"] = {{"tau_us", c.windowing.tau_us},
                      {"min_mult", c.windowing.min_mult},
                      {"max_mult", c.windowing.max_mult},
                      {"gap_mult", c.windowing.gap_mult},
                      {"max_events", c.windowing.max_events},
                      {"growth_step", c.windowing.growth_step}};
    j["clustering"] = {{"eps", c.clustering.eps},
                       {"min_pts", c.clustering.min_pts},
                       {"min_cluster_size", c.clustering.min_cluster_size}};
    j["features"] = {{"mode", to_string(c.features.mode)},
                     {"k", c.features.k},
                     {"tol_d", c.features.tol_d},
                     {"tol_c", c.features.tol_c},
                     {"tol_soft", c.features.tol_soft}};
    j["grid"] = {{"tol_grid", c.grid.tol_grid},
                 {"max_hull_vertices", c.grid.max_hull_vertices},
                 {"allow_mirrored", c.grid.allow_mirrored}};
    j["ransac"] = {{"iterations", c.ransac.iterations},
                   {"inlier_tol_px", c.ransac.inlier_tol_px},
                   {"min_inlier_fraction", c.ransac.min_inlier_fraction}};
    j["velocity"] = {{"max_trans_vel", c.max_trans_vel}, {"max_rot_vel", c.max_rot_vel}};
    j["cross_validation"] = {{"assign_ring", c.cross_validation.assign_ring},
                             {"tol_center", c.cross_validation.tol_center},
                             {"tol_radius", c.cross_validation.tol_radius},
                             {"min_features", c.cross_validation.min_features},
                             {"min_events", c.cross_validation.min_events}};
    j["spline"] = {{"degree", c.spline.degree},
                   {"max_gap_s", c.spline.max_gap_s},
                   {"min_frames", c.spline.min_frames},
                   {"control_multiplier", c.spline.control_multiplier}};
    j["augment"] = {{"enabled", c.augment_enabled},
                    {"dt_max_us", c.augment.dt_max_us},
                    {"d_max_factor", c.augment.d_max_factor},
                    {"window_factor", c.augment.window_factor}};
    j["solver"] = {{"max_iterations", c.solver.max_iterations},
                   {"huber_delta", c.solver.huber_delta},
                   {"function_tolerance", c.solver.function_tolerance},
                   {"gradient_tolerance", c.solver.gradient_tolerance},
                   {"step_tolerance", c.solver.step_tolerance},
                   {"max_consecutive_rejections", c.solver.max_consecutive_rejections},
                   {"initial_mu", c.solver.initial_mu}};
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    return j;
}

CalibrationConfig config_from_json(const json& j) {
    CalibrationConfig c;
    check_keys(j, {"sensor", "pattern", "windowing", "clustering", "features", "grid", "ransac", "velocity",
                   "cross_validation", "spline", "augment", "solver", "seed", "threads"},
               "config");
    if (j.contains("sensor")) {
        const auto& s = j["sensor"];
        check_keys(s, {"width", "height"}, "sensor");
        read(s, "width", c.sensor.width);
        read(s, "height", c.sensor.height);
    }
    if (j.contains("pattern")) {
        const auto& s = j["pattern"];
        check_keys(s, {"rows", "cols", "spacing", "circle_radius", "asymmetric"}, "pattern");
        read(s, "rows", c.pattern.rows);
        read(s, "cols", c.pattern.cols);
        read(s, "spacing", c.pattern.spacing);
        read(s, "circle_radius", c.pattern.circle_radius);
        read(s, "asymmetric", c.pattern.asymmetric);
    }
    if (j.contains("windowing")) {
        const auto& s = j["windowing"];
        check_keys(s, {"tau_us", "min_mult", "max_mult", "gap_mult", "max_events", "growth_step"}, "windowing");
        read(s, "tau_us", c.windowing.tau_us);
        read(s, "min_mult", c.windowing.min_mult);
        read(s, "max_mult", c.windowing.max_mult);
        read(s, "gap_mult", c.windowing.gap_mult);
        read(s, "max_events", c.windowing.max_events);
        read(s, "growth_step", c.windowing.growth_step);
    }
    if (j.contains("clustering")) {
        const auto& s = j["clustering"];
        check_keys(s, {"eps", "min_pts", "min_cluster_size"}, "clustering");
        read(s, "eps", c.clustering.eps);
        read(s, "min_pts", c.clustering.min_pts);
        read(s, "min_cluster_size", c.clustering.min_cluster_size);
    }
    if (j.contains("features")) {
        const auto& s = j["features"];
        check_keys(s, {"mode", "k", "tol_d", "tol_c", "tol_soft"}, "features");
        if (s.contains("mode")) {
            std::string mode;
            read(s, "mode", mode);
            c.features.mode = extraction_mode_from_string(mode);
        }
        read(s, "k", c.features.k);
        read(s, "tol_d", c.features.tol_d);
        read(s, "tol_c", c.features.tol_c);
        read(s, "tol_soft", c.features.tol_soft);
    }
    if (j.contains("grid")) {
        const auto& s = j["grid"];
        check_keys(s, {"tol_grid", "max_hull_vertices", "allow_mirrored"}, "grid");
        read(s, "tol_grid", c.grid.tol_grid);
        read(s, "max_hull_vertices", c.grid.max_hull_vertices);
        read(s, "allow_mirrored", c.grid.allow_mirrored);
    }
    if (j.contains("ransac")) {
        const auto& s = j["ransac"];
        check_keys(s, {"iterations", "inlier_tol_px", "min_inlier_fraction"}, "ransac");
        read(s, "iterations", c.ransac.iterations);
        read(s, "inlier_tol_px", c.ransac.inlier_tol_px);
        read(s, "min_inlier_fraction", c.ransac.min_inlier_fraction);
    }
    if (j.contains("velocity")) {
        const auto& s = j["velocity"];
        check_keys(s, {"max_trans_vel", "max_rot_vel"}, "velocity");
        read(s, "max_trans_vel", c.max_trans_vel);
        read(s, "max_rot_vel", c.max_rot_vel);
    }
    if (j.contains("cross_validation")) {
        const auto& s = j["cross_validation"];
        check_keys(s, {"assign_ring", "tol_center", "tol_radius", "min_features", "min_events"}, "cross_validation");
        read(s, "assign_ring", c.cross_validation.assign_ring);
        read(s, "tol_center", c.cross_validation.tol_center);
        read(s, "tol_radius", c.cross_validation.tol_radius);
        read(s, "min_features", c.cross_validation.min_features);
        read(s, "min_events", c.cross_validation.min_events);
    }
    if (j.contains("spline")) {
        const auto& s = j["spline"];
        check_keys(s, {"degree", "max_gap_s", "min_frames", "control_multiplier"}, "spline");
        read(s, "degree", c.spline.degree);
        read(s, "max_gap_s", c.spline.max_gap_s);
        read(s, "min_frames", c.spline.min_frames);
        read(s, "control_multiplier", c.spline.control_multiplier);
    }
    if (j.contains("augment")) {
        const auto& s = j["augment"];
        check_keys(s, {"enabled", "dt_max_us", "d_max_factor", "window_factor"}, "augment");
        read(s, "enabled", c.augment_enabled);
        read(s, "dt_max_us", c.augment.dt_max_us);
        read(s, "d_max_factor", c.augment.d_max_factor);
        read(s, "window_factor", c.augment.window_factor);
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        check_keys(s, {"max_iterations", "huber_delta", "function_tolerance", "gradient_tolerance", "step_tolerance",
                       "max_consecutive_rejections", "initial_mu"},
                   "solver");
        read(s, "max_iterations", c.solver.max_iterations);
        read(s, "huber_delta", c.solver.huber_delta);
        read(s, "function_tolerance", c.solver.function_tolerance);
        read(s, "gradient_tolerance", c.solver.gradient_tolerance);
        read(s, "step_tolerance", c.solver.step_tolerance);
        read(s, "max_consecutive_rejections", c.solver.max_consecutive_rejections);
        read(s, "initial_mu", c.solver.initial_mu);
    }
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);
    c.validate();
    return c;
}

ResidualStats residual_stats(std::span<const double> residuals, double huber_delta, int bins) {
    ResidualStats s;
    s.count = residuals.size();
    s.histogram.assign(static_cast<std::size_t>(bins), 0);
    if (residuals.empty()) return s;
    const HuberLoss loss{huber_delta > 0.0 ? huber_delta : 1.0};
    double sq = 0.0, abs_sum = 0.0;
    double lo = residuals.front(), hi = residuals.front();
    for (double r : residuals) {
        sq += r * r;
        abs_sum += std::abs(r);
        s.robust_cost += loss.rho(r * r);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    s.rms = std::sqrt(sq / static_cast<double>(residuals.size()));
    s.mean_abs = abs_sum / static_cast<double>(residuals.size());
    // Histogram over +-4 rms, clamped at the edges.
    const double span = std::max(4.0 * s.rms, 1e-12);
    s.histogram_min = std::max(lo, -span);
    s.histogram_max = std::min(hi, span);
    if (!(s.histogram_max > s.histogram_min)) s.histogram_max = s.histogram_min + 1e-12;
    const double width = (s.histogram_max - s.histogram_min) / bins;
    for (double r : residuals) {
        const auto b = static_cast<long>(std::floor((r - s.histogram_min) / width));
        s.histogram[static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1))]++;
    }
    return s;
}

namespace {

std::string stage_summary(const StageCounts& s) {
    std::ostringstream os;
    os << "events=" << s.events << " windows=" << s.windows << " abandoned=" << s.abandoned
       << " detector_calls=" << s.detector_calls << " orientation_rejected=" << s.orientation_rejected
       << " pnp_failed=" << s.pnp_failed << " velocity_rejected=" << s.velocity_rejected
       << " cross_validation_rejected=" << s.cross_validation_rejected << " segment_rejected=" << s.segment_rejected
       << " accepted=" << s.accepted;
    return os.str();
}

[[noreturn]] void infeasible(const std::string& what, const StageCounts& s) {
    throw InfeasibleError(what + " [" + stage_summary(s) + "]");
}

}  // namespace

CalibrationResult calibrate(std::span<const Event> events, const CalibrationConfig& config) {
    config.validate();
    CalibrationResult result;
    result.config = config_to_json(config);
    StageCounts& stages = result.stages;
    stages.events = events.size();
    if (events.empty()) infeasible("no reference frames: the event stream is empty", stages);

    // Windowing with grid detection as the acceptance test.
    std::vector<PatternDetection> detections;
    std::vector<std::size_t> feature_counts;
    const WindowDetector detector = [&](const EventWindow& window) {
        const auto clusters = extract_clusters(window, config.clustering);
        const auto features = extract_features(clusters, window, config.features);
        const PatternDetection* previous = detections.empty() ? nullptr : &detections.back();
        auto found = detect_grid(features, config.pattern, config.grid, previous);
        if (auto* det = std::get_if<PatternDetection>(&found)) {
            detections.push_back(std::move(*det));
            feature_counts.push_back(features.size());
            return true;
        }
        return false;
    };
    auto windowed = window_events(events, config.windowing, detector);
    stages.windows = windowed.windows.size();
    stages.abandoned = windowed.abandoned;
    stages.detector_calls = windowed.detector_calls;

    std::vector<ReferenceFrame> frames;
    result.frames.resize(windowed.windows.size());
    for (std::size_t i = 0; i < windowed.windows.size(); ++i) {
        auto& rec = result.frames[i];
        const auto& w = windowed.windows[i];
        rec.t_start = w.t_start;
        rec.t_end = w.t_end;
        rec.t_ref = w.t_ref();
        rec.event_count = w.events.size();
        rec.feature_count = feature_counts[i];
        for (const auto& f : detections[i].features) rec.detected.push_back(f.center);
        ReferenceFrame frame;
        frame.window = std::move(windowed.windows[i]);
        frame.detection = std::move(detections[i]);
        frames.push_back(std::move(frame));
    }

    // Row direction must not jump faster than the rotational bound.
    std::vector<char> alive(frames.size(), 1);
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const double dt = (frames[i].t_ref() - frames[i - 1].t_ref()) * 1e-6;
        if (dt <= config.spline.max_gap_s &&
            !orientation_consistency_check(frames[i].detection, frames[i - 1].detection, config.pattern, dt,
                                           config.max_rot_vel)) {
            alive[i] = 0;
            result.frames[i].status = "orientation";
            ++stages.orientation_rejected;
        }
    }

    // Closed-form intrinsics.
    std::vector<Mat3> homographies;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (alive[i]) homographies.push_back(frames[i].detection.homography);
    if (homographies.size() < 3) infeasible("no reference frames: fewer than three detections", stages);
    try {
        result.zhang = zhang_intrinsics(homographies);
    } catch (const ConditioningError& e) {
        infeasible(std::string("intrinsic initialization failed: ") + e.what(), stages);
    }
    Intrinsics k;
    k.fx = result.zhang.fx;
    k.fy = result.zhang.fy;
    k.cx = result.zhang.cx;
    k.cy = result.zhang.cy;

    // Forward radial distortion from homography poses, converted to the inverse model.
    {
        Mat3 kinv = Mat3::Identity();
        kinv(0, 0) = 1.0 / k.fx;
        kinv(1, 1) = 1.0 / k.fy;
        kinv(0, 2) = -k.cx / k.fx;
        kinv(1, 2) = -k.cy / k.fy;
        std::vector<PlanarView> views;
        std::vector<Pose> poses;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (!alive[i]) continue;
            PlanarView v;
            for (std::size_t s = 0; s < frames[i].detection.features.size(); ++s) {
                v.image.push_back(frames[i].detection.features[s].center);
                v.board.push_back(frames[i].detection.board[s].head<2>());
            }
            views.push_back(std::move(v));
            poses.push_back(pose_from_homography(kinv * frames[i].detection.homography));
        }
        result.forward_radial = estimate_forward_radial(k, views, poses);
        try {
            const double alpha_max = sensor_alpha_max(k, config.sensor);
            const auto fit = fit_inverse_from_forward(result.forward_radial, alpha_max);
            Intrinsics candidate = k;
            candidate.k = fit.k;
            if (is_valid(candidate, config.sensor)) k = candidate;
        } catch (const DomainError&) {
            // Keep the distortion-free model.
        }
    }
    check_validity(k, config.sensor);
    result.initial_intrinsics = k;

    // Per-frame pose, velocity gate and cross-validation.
    std::vector<TimedPose> timed;
    std::vector<std::size_t> timed_index;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!alive[i]) continue;
        auto pnp = pnp_ransac(frames[i].detection, k, config.ransac);
        if (!pnp) {
            alive[i] = 0;
            result.frames[i].status = "pnp_failed";
            ++stages.pnp_failed;
            continue;
        }
        frames[i].pose = pnp->pose;
        result.frames[i].initial_pose = pnp->pose;
        timed.push_back({frames[i].t_ref(), pnp->pose});
        timed_index.push_back(i);
    }
    {
        const auto kept = velocity_filter(timed, config.max_trans_vel, config.max_rot_vel);
        std::vector<char> keep(timed.size(), 0);
        for (auto k_i : kept) keep[k_i] = 1;
        for (std::size_t t = 0; t < timed.size(); ++t) {
            if (keep[t]) continue;
            alive[timed_index[t]] = 0;
            result.frames[timed_index[t]].status = "velocity";
            ++stages.velocity_rejected;
        }
    }
    const auto board = board_points(config.pattern);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!alive[i]) continue;
        cross_validate_features(frames[i], k, config.pattern, config.sensor, config.cross_validation);
        result.frames[i].rectified = frames[i].rectified;
        if (!frames[i].accepted) {
            alive[i] = 0;
            result.frames[i].status = "cross_validation";
            ++stages.cross_validation_rejected;
            continue;
        }
        std::vector<Vec2> img;
        std::vector<Vec3> brd;
        for (const auto& rf : frames[i].rectified) {
            img.push_back(rf.center);
            brd.push_back(board[static_cast<std::size_t>(rf.circle)]);
        }
        frames[i].pose = refine_pose(*frames[i].pose, k, img, brd);
    }

    // Segments over the surviving frames.
    std::vector<std::size_t> live;
    std::vector<double> live_t;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!alive[i]) continue;
        live.push_back(i);
        live_t.push_back(frames[i].t_ref());
    }
    const int p = config.spline.degree;
    const auto min_frames =
        static_cast<std::size_t>(config.spline.min_frames > 0 ? config.spline.min_frames : p + 2);
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    try {
        groups = group_segments(live_t, config.spline.max_gap_s * 1e6, min_frames);
    } catch (const InfeasibleError&) {
        stages.segment_rejected = live.size();
        for (auto i : live) result.frames[i].status = "segment";
        infeasible("no trajectory segment could be formed", stages);
    }

    std::vector<int> frame_segment(frames.size(), -1);
    std::vector<SplineSegment> segments;
    for (const auto& [a, b] : groups) {
        std::vector<double> t;
        std::vector<Quat> q;
        std::vector<Vec3> pos;
        const auto& first = frames[live[a]];
        const auto& last = frames[live[b]];
        t.push_back(static_cast<double>(first.window.t_start));
        q.push_back(first.pose->quaternion());
        pos.push_back(first.pose->translation);
        for (std::size_t m = a; m <= b; ++m) {
            const auto& f = frames[live[m]];
            t.push_back(f.t_ref());
            q.push_back(f.pose->quaternion());
            pos.push_back(f.pose->translation);
        }
        t.push_back(static_cast<double>(last.window.t_end));
        q.push_back(last.pose->quaternion());
        pos.push_back(last.pose->translation);
        const auto aligned = hemisphere_align(q);
        std::vector<Vec7> samples;
        for (std::size_t m = 0; m < t.size(); ++m) {
            Vec7 v;
            v << pos[m], aligned[m].coeffs();
            samples.push_back(v);
        }
        const int frames_in = static_cast<int>(b - a + 1);
        const int n_ctrl = std::clamp(static_cast<int>(std::lround(config.spline.control_multiplier * frames_in)), p + 1,
                                      static_cast<int>(samples.size()));
        SplineSegment seg = approximate_segment(t, samples, p, n_ctrl);
        seg.first_frame = live[a];
        seg.last_frame = live[b];
        for (std::size_t m = a; m <= b; ++m) frame_segment[live[m]] = static_cast<int>(segments.size());
        segments.push_back(std::move(seg));
    }
    for (std::size_t m = 0; m < live.size(); ++m) {
        if (frame_segment[live[m]] < 0) {
            result.frames[live[m]].status = "segment";
            ++stages.segment_rejected;
        }
    }

    // Correspondences and joint refinement.
    auto corr = initial_correspondences(frames, frame_segment, config.pattern);
    result.initial_correspondences = corr.size();
    if (config.augment_enabled) {
        AugmentParams ap = config.augment;
        ap.dt_max_us = config.augment_dt_max_us();
        auto extra = augment_events(frames, frame_segment, segments, events, config.pattern, ap);
        result.augmented_correspondences = extra.size();
        corr.insert(corr.end(), extra.begin(), extra.end());
    }
    if (corr.empty()) infeasible("no event correspondences", stages);

    SolverOptions so = config.solver;
    so.sensor = config.sensor;
    so.threads = config.threads;
    auto solved = solve(corr, k, std::move(segments), config.pattern.circle_radius, so);
    result.intrinsics = solved.intrinsics;
    result.segments = std::move(solved.segments);
    result.report = std::move(solved.report);

    for (std::size_t i = 0; i < frames.size(); ++i) {
        const int s = frame_segment[i];
        result.frames[i].segment = s;
        if (s < 0) continue;
        result.frames[i].status = "accepted";
        result.frames[i].refined_pose = evaluate(result.segments[static_cast<std::size_t>(s)], frames[i].t_ref());
        ++stages.accepted;
    }
    const auto res = compute_residuals(corr, result.intrinsics, result.segments, config.pattern.circle_radius);
    result.residuals = residual_stats(res, result.report.huber_delta);
    return result;
}

namespace {

json pose_json(const Pose& p) {
    const Quat q = p.quaternion();
    return {{"t", {p.translation.x(), p.translation.y(), p.translation.z()}}, {"q", {q.x(), q.y(), q.z(), q.w()}}};
}

Pose pose_from(const json& j) {
    const auto t = j.at("t").get<std::vector<double>>();
    const auto q = j.at("q").get<std::vector<double>>();
    return Pose::from(Quat(q.at(3), q.at(0), q.at(1), q.at(2)), Vec3(t.at(0), t.at(1), t.at(2)));
}

json intrinsics_json(const Intrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
            {"k", std::vector<double>(k.k.begin(), k.k.end())}};
}

Intrinsics intrinsics_from(const json& j) {
    Intrinsics k;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    const auto c = j.at("k").get<std::vector<double>>();
    for (std::size_t i = 0; i < k.k.size() && i < c.size(); ++i) k.k[i] = c[i];
    return k;
}

json vec2_json(const Vec2& v) { return {v.x(), v.y()}; }
Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

json result_to_json(const CalibrationResult& r) {
    json j;
    j["tool_version"] = kToolVersion;
    j["intrinsics"] = intrinsics_json(r.intrinsics);
    j["initial_intrinsics"] = intrinsics_json(r.initial_intrinsics);
    j["zhang"] = {{"fx", r.zhang.fx}, {"fy", r.zhang.fy}, {"cx", r.zhang.cx}, {"cy", r.zhang.cy},
                  {"condition", r.zhang.condition}};
    j["forward_radial"] = {r.forward_radial[0], r.forward_radial[1]};
    j["segments"] = json::array();
    for (const auto& s : r.segments) {
        json cps = json::array();
        for (const auto& c : s.control_points) cps.push_back(std::vector<double>(c.data(), c.data() + 7));
        j["segments"].push_back({{"degree", s.knots.degree},
                                 {"knots_us", s.knots.u},
                                 {"control_points", cps},
                                 {"first_frame", s.first_frame},
                                 {"last_frame", s.last_frame}});
    }
    j["frames"] = json::array();
    for (const auto& f : r.frames) {
        json fj = {{"t_start_us", f.t_start},         {"t_end_us", f.t_end},
                   {"t_ref_us", f.t_ref},             {"event_count", f.event_count},
                   {"feature_count", f.feature_count}, {"status", f.status},
                   {"segment", f.segment}};
        fj["detected"] = json::array();
        for (const auto& d : f.detected) fj["detected"].push_back(vec2_json(d));
        fj["rectified"] = json::array();
        for (const auto& rf : f.rectified) {
            fj["rectified"].push_back({{"circle", rf.circle},
                                       {"center", vec2_json(rf.center)},
                                       {"radius", rf.radius},
                                       {"reprojected", vec2_json(rf.reprojected)},
                                       {"reprojected_radius", rf.reprojected_radius}});
        }
        if (f.initial_pose) fj["initial_pose"] = pose_json(*f.initial_pose);
        if (f.refined_pose) fj["refined_pose"] = pose_json(*f.refined_pose);
        j["frames"].push_back(std::move(fj));
    }
    const auto& s = r.stages;
    j["stages"] = {{"events", s.events},
                   {"windows", s.windows},
                   {"abandoned", s.abandoned},
                   {"detector_calls", s.detector_calls},
                   {"orientation_rejected", s.orientation_rejected},
                   {"pnp_failed", s.pnp_failed},
                   {"velocity_rejected", s.velocity_rejected},
                   {"cross_validation_rejected", s.cross_validation_rejected},
                   {"segment_rejected", s.segment_rejected},
                   {"accepted", s.accepted}};
    j["correspondences"] = {{"initial", r.initial_correspondences},
                            {"augmented", r.augmented_correspondences},
                            {"total", r.initial_correspondences + r.augmented_correspondences}};
    j["residuals"] = {{"count", r.residuals.count},
                      {"rms_m", r.residuals.rms},
                      {"mean_abs_m", r.residuals.mean_abs},
                      {"robust_cost", r.residuals.robust_cost},
                      {"histogram_min_m", r.residuals.histogram_min},
                      {"histogram_max_m", r.residuals.histogram_max},
                      {"histogram", r.residuals.histogram}};
    json hist = json::array();
    for (const auto& h : r.report.history)
        hist.push_back({{"iteration", h.iteration}, {"cost", h.cost}, {"mu", h.mu}, {"accepted", h.accepted}});
    j["solver"] = {{"iterations", r.report.iterations},
                   {"initial_cost", r.report.initial_cost},
                   {"final_cost", r.report.final_cost},
                   {"huber_delta", r.report.huber_delta},
                   {"converged", r.report.converged},
                   {"termination", r.report.termination},
                   {"residual_count", r.report.residual_count},
                   {"degenerate_count", r.report.degenerate_count},
                   {"history", hist}};
    j["config"] = r.config;
    return j;
}

CalibrationResult result_from_json(const json& j) {
    CalibrationResult r;
    try {
        r.intrinsics = intrinsics_from(j.at("intrinsics"));
        if (j.contains("initial_intrinsics")) r.initial_intrinsics = intrinsics_from(j.at("initial_intrinsics"));
        if (j.contains("forward_radial")) {
            const auto fr = j.at("forward_radial").get<std::vector<double>>();
            if (fr.size() != 2) throw ValidationError("forward_radial must have 2 entries");
            r.forward_radial = {fr[0], fr[1]};
        }
        for (const auto& sj : j.at("segments")) {
            SplineSegment s;
            s.knots.degree = sj.at("degree").get<int>();
            s.knots.u = sj.at("knots_us").get<std::vector<double>>();
            for (const auto& c : sj.at("control_points")) {
                const auto v = c.get<std::vector<double>>();
                if (v.size() != 7) throw ValidationError("control point must have 7 entries");
                s.control_points.push_back(Vec7(v.data()));
            }
            s.first_frame = sj.value("first_frame", std::size_t{0});
            s.last_frame = sj.value("last_frame", std::size_t{0});
            s.knots.validate();
            if (static_cast<int>(s.control_points.size()) != s.knots.control_count()) {
                throw ValidationError("segment control point count does not match its knots");
            }
            r.segments.push_back(std::move(s));
        }
        for (const auto& fj : j.at("frames")) {
            FrameRecord f;
            f.t_start = fj.at("t_start_us").get<std::int64_t>();
            f.t_end = fj.at("t_end_us").get<std::int64_t>();
            f.t_ref = fj.at("t_ref_us").get<double>();
            f.event_count = fj.value("event_count", std::size_t{0});
            f.feature_count = fj.value("feature_count", std::size_t{0});
            f.status = fj.value("status", std::string{});
            f.segment = fj.value("segment", -1);
            for (const auto& d : fj.value("detected", json::array())) f.detected.push_back(vec2_from(d));
            for (const auto& rj : fj.value("rectified", json::array())) {
                RectifiedFeature rf;
                rf.circle = rj.at("circle").get<int>();
                rf.center = vec2_from(rj.at("center"));
                rf.radius = rj.at("radius").get<double>();
                rf.reprojected = vec2_from(rj.at("reprojected"));
                rf.reprojected_radius = rj.at("reprojected_radius").get<double>();
                f.rectified.push_back(rf);
            }
            if (fj.contains("initial_pose")) f.initial_pose = pose_from(fj.at("initial_pose"));
            if (fj.contains("refined_pose")) f.refined_pose = pose_from(fj.at("refined_pose"));
            r.frames.push_back(std::move(f));
        }
        if (j.contains("residuals")) {
            const auto& rj = j.at("residuals");
            r.residuals.count = rj.value("count", std::size_t{0});
            r.residuals.rms = rj.value("rms_m", 0.0);
            r.residuals.mean_abs = rj.value("mean_abs_m", 0.0);
            r.residuals.robust_cost = rj.value("robust_cost", 0.0);
            r.residuals.histogram_min = rj.value("histogram_min_m", 0.0);
            r.residuals.histogram_max = rj.value("histogram_max_m", 0.0);
            r.residuals.histogram = rj.value("histogram", std::vector<std::size_t>{});
        }
        if (j.contains("correspondences")) {
            r.initial_correspondences = j["correspondences"].value("initial", std::size_t{0});
            r.augmented_correspondences = j["correspondences"].value("augmented", std::size_t{0});
        }
        if (j.contains("solver")) {
            const auto& sj = j.at("solver");
            r.report.iterations = sj.value("iterations", 0);
            r.report.initial_cost = sj.value("initial_cost", 0.0);
            r.report.final_cost = sj.value("final_cost", 0.0);
            r.report.huber_delta = sj.value("huber_delta", 0.0);
            r.report.converged = sj.value("converged", false);
            r.report.termination = sj.value("termination", std::string{});
            r.report.residual_count = sj.value("residual_count", std::size_t{0});
            r.report.degenerate_count = sj.value("degenerate_count", std::size_t{0});
            for (const auto& h : sj.value("history", json::array())) {
                r.report.history.push_back({h.at("iteration").get<int>(), h.at("cost").get<double>(),
                                            h.at("mu").get<double>(), h.at("accepted").get<bool>()});
            }
        }
        if (j.contains("zhang")) {
            const auto& zj = j.at("zhang");
            r.zhang = {zj.at("fx").get<double>(), zj.at("fy").get<double>(), zj.at("cx").get<double>(),
                       zj.at("cy").get<double>(), zj.at("condition").get<double>()};
        }
        if (j.contains("stages")) {
            const auto& st = j.at("stages");
            auto& s = r.stages;
            for (auto [key, field] : {std::pair{"events", &s.events},
                                      {"windows", &s.windows},
                                      {"abandoned", &s.abandoned},
                                      {"detector_calls", &s.detector_calls},
                                      {"orientation_rejected", &s.orientation_rejected},
                                      {"pnp_failed", &s.pnp_failed},
                                      {"velocity_rejected", &s.velocity_rejected},
                                      {"cross_validation_rejected", &s.cross_validation_rejected},
                                      {"segment_rejected", &s.segment_rejected},
                                      {"accepted", &s.accepted}}) {
                *field = st.value(key, std::size_t{0});
            }
        }
        if (j.contains("config")) r.config = j.at("config");
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed result file: ") + e.what());
    }
    return r;
}

}  // namespace evcal
