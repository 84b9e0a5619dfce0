#pragma once

#include "evcal/init_calibration.hpp"

#include <span>

namespace evcal {

struct AteStats {
    std::size_t matches = 0;
    double rmse = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0;
    Mat3 rotation = Mat3::Identity();  // alignment applied to the estimate
    Vec3 translation = Vec3::Zero();
};

/// Pairs each estimated pose with the ground-truth pose nearest in time
/// (within max_offset_us), rigidly aligns the estimated positions onto the
/// ground truth (rotation + translation, no scale) and reports translational
/// error statistics. Throws ValidationError when nothing associates.
AteStats absolute_trajectory_error(std::span<const TimedPose> estimate, std::span<const TimedPose> ground_truth,
                                   double max_offset_us = 20000.0);

}  // namespace evcal
