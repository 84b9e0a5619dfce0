#pragma once

#include "evcal/camera_model.hpp"
#include "evcal/event_core.hpp"
#include "evcal/init_calibration.hpp"
#include "evcal/pattern.hpp"
#include "evcal/spline.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace evcal {

struct NoiseModel {
    double pixel_jitter = 0.0;         // sigma in pixels, before rounding
    double clutter_fraction = 0.0;     // uniform noise events per signal event
    double timestamp_jitter_us = 0.0;  // sigma in microseconds
};

/// Hand-held style motion in front of the board: the camera looks at a point
/// wandering around the board center while tilting and rolling. Every term is
/// a sinusoid; speed_scale multiplies all frequencies.
struct MotionProfile {
    double distance = 0.5;       // meters
    double distance_swing = 0.05;
    double tilt_deg = 20.0;
    double roll_deg = 8.0;
    double offset_x = 0.05;      // look-at wander, meters
    double offset_y = 0.035;
    double speed_scale = 1.0;
    bool stationary = false;     // fixed pose at t = 0
};

struct SyntheticScene {
    Intrinsics intrinsics_gt;
    SensorGeometry sensor;
    PatternSpec pattern;
    NoiseModel noise;
    MotionProfile motion;
    double duration_s = 10.0;
    double event_rate = 1e5;  // signal events per second
    double control_interval_s = 0.02;
    std::uint64_t seed = 7;
};

/// fx = fy = 340, cx = 173, cy = 130, k1 = 0.35 on a 346 x 260 sensor, 10 s.
SyntheticScene default_scene();
/// 8 s at twice the default motion frequencies.
SyntheticScene high_velocity_scene();

/// Camera-to-world pose of the analytic motion at time t (seconds).
Pose motion_pose(const SyntheticScene& scene, double t_s);

/// Cubic spline through motion samples every control_interval_s over
/// [0, duration]. Empty for a zero duration.
std::vector<SplineSegment> ground_truth_trajectory(const SyntheticScene& scene);

struct SyntheticOutput {
    std::vector<Event> events;
    std::vector<TimedPose> gt_poses;  // 1 kHz over [0, duration]
    std::vector<SplineSegment> trajectory;
    std::size_t signal_events = 0;
    std::size_t clutter_events = 0;
};

/// Deterministic given scene.seed. Throws ValidationError when the pattern is
/// out of view for the whole sequence.
SyntheticOutput generate(const SyntheticScene& scene);

/// `t_us tx ty tz qx qy qz qw` per line after a '#' header.
void write_pose_log(const std::filesystem::path& path, const std::vector<TimedPose>& poses);
std::vector<TimedPose> read_pose_log(const std::filesystem::path& path);

}  // namespace evcal
