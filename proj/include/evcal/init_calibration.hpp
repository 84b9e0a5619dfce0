#pragma once

#include "evcal/camera_model.hpp"
#include "evcal/event_core.hpp"
#include "evcal/geometry.hpp"
#include "evcal/pattern.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace evcal {

struct ZhangResult {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double condition = 0.0;  // sigma_max / sigma_4 of the constraint matrix
};

/// Closed-form zero-skew intrinsics from plane-to-image homographies via the
/// image of the absolute conic. Needs at least three homographies; throws
/// ConditioningError when the views do not constrain the conic.
ZhangResult zhang_intrinsics(std::span<const Mat3> homographies);

/// Camera pose from a board-to-normalized-image homography, in the
/// camera-to-world convention of Pose.
Pose pose_from_homography(const Mat3& h_normalized);

struct PlanarView {
    std::vector<Vec2> image;  // observed pixels
    std::vector<Vec2> board;  // metric board xy
};

/// Linear least-squares estimate of a forward radial model
/// r_d = r_u (1 + c1 r_u^2 + c2 r_u^4) given pinhole intrinsics and per-view poses.
std::array<double, 2> estimate_forward_radial(const Intrinsics& pinhole, std::span<const PlanarView> views,
                                              std::span<const Pose> poses);

/// Reprojection error minimization of a single pose over the given points.
Pose refine_pose(const Pose& initial, const Intrinsics& k, std::span<const Vec2> image,
                 std::span<const Vec3> board, int iterations = 15);

double reprojection_error(const Pose& pose, const Intrinsics& k, const Vec2& image, const Vec3& board);

struct RansacParams {
    int iterations = 200;
    double inlier_tol_px = 2.0;
    double min_inlier_fraction = 0.6;
    std::uint64_t seed = 7;
};

struct PnpResult {
    Pose pose;
    std::vector<int> inliers;  // circle indices
    double rms_px = 0.0;
};

/// Planar pose with a four-point homography hypothesis per iteration. Returns
/// nullopt when fewer than min_inlier_fraction of the circles are inliers.
std::optional<PnpResult> pnp_ransac(const PatternDetection& detection, const Intrinsics& k,
                                    const RansacParams& params);

struct TimedPose {
    double t_us = 0.0;
    Pose pose;
};

/// Indices of the frames that survive; each frame is compared with the last
/// surviving one.
std::vector<std::size_t> velocity_filter(std::span<const TimedPose> frames, double max_trans_vel,
                                         double max_rot_vel);

struct RectifiedFeature {
    int circle = -1;
    Vec2 center = Vec2::Zero();        // refit from reassigned events
    double radius = 0.0;
    Vec2 reprojected = Vec2::Zero();   // reprojected pattern circle
    double reprojected_radius = 0.0;
};

struct ReferenceFrame {
    EventWindow window;
    PatternDetection detection;
    std::optional<Pose> pose;
    bool accepted = false;
    std::vector<RectifiedFeature> rectified;
    std::vector<int> event_circle;  // per window event: circle index or -1

    double t_ref() const { return window.t_ref(); }
};

struct CrossValidationParams {
    double assign_ring = 0.5;  // |dist - radius| gate as a fraction of the reprojected radius
    double tol_center = 0.5;   // refit-to-reprojected center distance / radius
    double tol_radius = 0.4;   // refit / reprojected radius must lie in [1 - tol, 1 + tol]
    int min_features = 0;      // 0 selects ceil(rows * cols / 3)
    int min_events = 6;        // fewer reassigned events than this drops the circle
};

/// Reprojects every pattern circle with the frame pose, reassigns window
/// events to the nearest reprojected circle, refits and compares. Sets
/// `rectified`, `event_circle` and `accepted`.
void cross_validate_features(ReferenceFrame& frame, const Intrinsics& k, const PatternSpec& spec,
                             const SensorGeometry& sensor, const CrossValidationParams& params);

/// Image circle of pattern circle `center` with metric radius `radius` under
/// a camera-to-world pose. Returns false when any boundary sample leaves the
/// sensor or falls behind the camera.
bool reproject_circle(const Pose& pose, const Intrinsics& k, const Vec3& center, double radius,
                      const SensorGeometry& sensor, Vec2& image_center, double& image_radius);

}  // namespace evcal
