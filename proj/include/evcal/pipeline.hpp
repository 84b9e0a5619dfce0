#pragma once

#include "evcal/camera_model.hpp"
#include "evcal/clustering.hpp"
#include "evcal/event_core.hpp"
#include "evcal/features.hpp"
#include "evcal/init_calibration.hpp"
#include "evcal/optimizer.hpp"
#include "evcal/pattern.hpp"
#include "evcal/spline.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evcal {

inline constexpr const char* kToolVersion = "1.0.0";

struct SplineConfig {
    int degree = 3;
    double max_gap_s = 1.0;
    int min_frames = 0;                // 0 selects degree + 2
    double control_multiplier = 1.0;   // control points per reference frame
};

struct CalibrationConfig {
    SensorGeometry sensor;
    PatternSpec pattern;
    WindowingConfig windowing;
    ClusteringParams clustering;
    FeatureParams features;
    GridParams grid;
    RansacParams ransac;
    double max_trans_vel = 5.0;  // m/s
    double max_rot_vel = 6.0;    // rad/s
    CrossValidationParams cross_validation;
    SplineConfig spline;
    AugmentParams augment;       // dt_max_us <= 0 selects max_mult * tau / 2
    bool augment_enabled = true;
    SolverOptions solver;
    std::uint64_t seed = 7;
    int threads = 1;

    void validate() const;
    double augment_dt_max_us() const;
};

nlohmann::json config_to_json(const CalibrationConfig& config);
/// Starts from defaults and overrides the keys present in `j`. Unknown keys
/// raise ValidationError so typos do not pass silently.
CalibrationConfig config_from_json(const nlohmann::json& j);

struct FrameRecord {
    std::int64_t t_start = 0;
    std::int64_t t_end = 0;
    double t_ref = 0.0;
    std::size_t event_count = 0;
    std::size_t feature_count = 0;            // extracted features before grid detection
    std::vector<Vec2> detected;               // ordered grid features
    std::vector<RectifiedFeature> rectified;
    std::optional<Pose> initial_pose;
    std::optional<Pose> refined_pose;         // spline at t_ref
    std::string status;                       // accepted | pnp_failed | velocity | orientation | cross_validation | segment
    int segment = -1;
};

struct StageCounts {
    std::size_t events = 0;
    std::size_t windows = 0;
    std::size_t abandoned = 0;
    std::size_t detector_calls = 0;
    std::size_t orientation_rejected = 0;
    std::size_t pnp_failed = 0;
    std::size_t velocity_rejected = 0;
    std::size_t cross_validation_rejected = 0;
    std::size_t segment_rejected = 0;
    std::size_t accepted = 0;
};

struct ResidualStats {
    std::size_t count = 0;
    double rms = 0.0;       // meters
    double mean_abs = 0.0;
    double robust_cost = 0.0;
    double histogram_min = 0.0;
    double histogram_max = 0.0;
    std::vector<std::size_t> histogram;
};

struct CalibrationResult {
    Intrinsics intrinsics;
    Intrinsics initial_intrinsics;
    ZhangResult zhang;
    std::array<double, 2> forward_radial{};
    std::vector<SplineSegment> segments;
    std::vector<FrameRecord> frames;
    StageCounts stages;
    std::size_t initial_correspondences = 0;
    std::size_t augmented_correspondences = 0;
    ResidualStats residuals;
    SolverReport report;
    nlohmann::json config;
};

/// Full pipeline: window, cluster, extract, detect, initialize, rectify,
/// group, approximate, augment, solve. Throws InfeasibleError when no
/// segment survives, with a stage summary in the message.
CalibrationResult calibrate(std::span<const Event> events, const CalibrationConfig& config);

ResidualStats residual_stats(std::span<const double> residuals, double huber_delta, int bins = 40);

nlohmann::json result_to_json(const CalibrationResult& result);
CalibrationResult result_from_json(const nlohmann::json& j);

}  // namespace evcal
