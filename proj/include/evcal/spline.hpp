#pragma once

#include "evcal/common.hpp"
#include "evcal/geometry.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace evcal {

inline constexpr int kMaxSplineDegree = 5;

/// Clamped, non-decreasing knot sequence. Parameters are timestamps in
/// microseconds (stored as double).
struct KnotVector {
    int degree = 3;
    std::vector<double> u;

    /// Index n of the last control point: |u| - p - 2.
    int last_index() const { return static_cast<int>(u.size()) - degree - 2; }
    int control_count() const { return last_index() + 1; }
    double front() const { return u.front(); }
    double back() const { return u.back(); }

    /// Throws DomainError unless the sequence is clamped, non-decreasing and
    /// its interior knots lie strictly inside the domain.
    void validate() const;
};

/// Span k with u in [u_k, u_{k+1}); the domain end maps to n.
int find_span(const KnotVector& knots, double u);

/// Non-zero basis functions N_{k-p..k, p}(u) written to `out` (size >= p + 1).
void basis_funs(int span, double u, const KnotVector& knots, std::span<double> out);
std::vector<double> basis_funs(int span, double u, const KnotVector& knots);

/// Control points are (x, y, z, qx, qy, qz, qw); the quaternion block is
/// normalized only at evaluation.
struct SplineSegment {
    KnotVector knots;
    std::vector<Vec7> control_points;
    std::size_t first_frame = 0;  // covered reference frames [first_frame, last_frame]
    std::size_t last_frame = 0;

    double t_begin() const { return knots.front(); }
    double t_end() const { return knots.back(); }
    bool contains(double t) const { return t >= t_begin() && t <= t_end(); }
};

/// Intermediate values of one evaluation, reused by the optimizer for
/// derivatives: pose = sum over i of basis[i] * control_points[first + i].
struct SplineSample {
    int first = 0;  // index of the first active control point
    int count = 0;  // p + 1
    std::array<double, kMaxSplineDegree + 1> basis{};
    Vec3 position = Vec3::Zero();
    Vec4 quaternion_raw = Vec4::Zero();  // (x, y, z, w), before normalization
};

/// Throws DomainError outside the segment span or when the blended
/// quaternion norm falls below 1e-9.
SplineSample sample(const SplineSegment& seg, double t);
Pose evaluate(const SplineSegment& seg, double t);

Vec7 pose_to_vector(const Pose& pose);

/// Maximal runs of frames whose consecutive timestamps differ by at most
/// max_gap_us; runs with fewer than min_frames frames are dropped. Returns
/// inclusive index ranges. Throws InfeasibleError when nothing survives.
std::vector<std::pair<std::size_t, std::size_t>> group_segments(std::span<const double> t_us, double max_gap_us,
                                                                std::size_t min_frames);

/// Flips each quaternion into the hemisphere of its aligned predecessor.
std::vector<Quat> hemisphere_align(std::span<const Quat> quaternions);

/// Knot vector for approximating samples at parameters `params` with n_ctrl
/// control points: the averaging rule applied to n_ctrl parameters resampled
/// at evenly spaced fractional sample indices (plain parameter averaging when
/// n_ctrl equals the sample count).
KnotVector approximation_knots(std::span<const double> params, int degree, int n_ctrl);

/// Least-squares approximation with pinned end control points. The first and
/// last samples define the segment span. Throws ConditioningError when the
/// normal equations are rank deficient.
SplineSegment approximate_segment(std::span<const double> t_us, std::span<const Vec7> samples, int degree,
                                  int n_ctrl);

/// Sum of squared sample residuals of a segment.
double approximation_residual(const SplineSegment& seg, std::span<const double> t_us, std::span<const Vec7> samples);

}  // namespace evcal
