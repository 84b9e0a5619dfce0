#pragma once

#include "evcal/camera_model.hpp"
#include "evcal/event_core.hpp"
#include "evcal/geometry.hpp"
#include "evcal/init_calibration.hpp"
#include "evcal/pattern.hpp"
#include "evcal/spline.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace evcal {

struct EventCorrespondence {
    std::size_t event_index = 0;  // position in the source stream
    double t_us = 0.0;
    Vec2 pixel = Vec2::Zero();
    int segment = 0;
    int circle = 0;
    Vec3 center = Vec3::Zero();  // board center of the circle, z = 0
    bool augmented = false;
};

/// Depth along the unnormalized ray `ray_cam` at which it meets the plane
/// z = 0, for a camera-to-world pose. Throws DomainError when the ray is
/// parallel to the plane.
double event_depth(const Pose& pose, const Vec3& ray_cam);
double event_depth(const SplineSegment& seg, double t_us, const Vec2& pixel, const Intrinsics& k);

/// Scalar residual and its non-zero derivative blocks.
struct ResidualJacobian {
    Eigen::Matrix<double, 1, Intrinsics::kSize> d_intrinsics;
    int first_control = 0;
    int control_count = 0;
    std::array<Eigen::Matrix<double, 1, 7>, kMaxSplineDegree + 1> d_control;
};

/// Signed distance ||x - l|| - radius of the event's plane point to its
/// circle. Returns false for a degenerate ray (|w_z| < 1e-12); `jac` is
/// filled when non-null.
bool event_residual(const EventCorrespondence& corr, const Intrinsics& k, const SplineSegment& seg,
                    double radius, double& residual, ResidualJacobian* jac = nullptr);

/// Huber loss on the squared residual s = r^2.
struct HuberLoss {
    double delta = 1.0;

    double rho(double s) const { return s <= delta * delta ? s : 2.0 * delta * std::sqrt(s) - delta * delta; }
    /// d rho / ds, the IRLS weight.
    double weight(double s) const { return s <= delta * delta ? 1.0 : delta / std::sqrt(s); }
};

/// 1.345 times the normal-consistent MAD (1.4826 * median |r - median r|).
double huber_delta_from_residuals(std::vector<double> residuals);

/// Correspondences from the cross-validated circle assignment of each frame.
/// frame_segment[j] is the segment of frame j or -1.
std::vector<EventCorrespondence> initial_correspondences(std::span<const ReferenceFrame> frames,
                                                         std::span<const int> frame_segment,
                                                         const PatternSpec& spec);

struct AugmentParams {
    double dt_max_us = 30000.0;
    double d_max_factor = 1.5;  // gate on distance to the circle perimeter, in fitted radii
    // Additionally limit |t - t_ref| to this multiple of the frame's own
    // window duration (<= 0 disables the limit).
    double window_factor = 1.0;
};

/// Assigns events outside every frame window to the circle of the temporally
/// nearest frame (restricted to frames that belong to a segment whose span
/// contains the event). Ties between circles go to the lower circle index.
std::vector<EventCorrespondence> augment_events(std::span<const ReferenceFrame> frames,
                                                std::span<const int> frame_segment,
                                                std::span<const SplineSegment> segments,
                                                std::span<const Event> stream, const PatternSpec& spec,
                                                const AugmentParams& params);

struct SolverOptions {
    int max_iterations = 100;
    double huber_delta = 0.0;  // <= 0 selects huber_delta_from_residuals at the initial state
    double function_tolerance = 1e-10;
    double gradient_tolerance = 1e-12;
    double step_tolerance = 1e-10;
    int max_consecutive_rejections = 12;
    double initial_mu = 1e-4;
    int threads = 1;
    bool optimize_intrinsics = true;
    SensorGeometry sensor;
};

struct SolverIteration {
    int iteration = 0;
    double cost = 0.0;
    double mu = 0.0;
    bool accepted = false;
};

struct SolverReport {
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    double huber_delta = 0.0;
    bool converged = false;
    std::string termination;
    std::size_t residual_count = 0;
    std::size_t degenerate_count = 0;  // at the final state
    std::vector<SolverIteration> history;
};

struct SolveResult {
    Intrinsics intrinsics;
    std::vector<SplineSegment> segments;
    SolverReport report;
};

/// Joint Levenberg-Marquardt over intrinsics and every control point,
/// minimizing sum rho(r^2). Reductions run over a fixed chunking so the result
/// does not depend on the thread count.
SolveResult solve(std::span<const EventCorrespondence> correspondences, const Intrinsics& initial,
                  std::vector<SplineSegment> segments, double circle_radius, const SolverOptions& options);

/// Residuals of all non-degenerate correspondences (degenerate ones skipped).
std::vector<double> compute_residuals(std::span<const EventCorrespondence> correspondences, const Intrinsics& k,
                                      std::span<const SplineSegment> segments, double circle_radius,
                                      std::size_t* degenerate = nullptr);

}  // namespace evcal
