#pragma once

#include "evcal/common.hpp"

#include <span>

namespace evcal {

/// Rigid transform mapping camera-frame points into the pattern (world)
/// frame: x_world = rotation * x_cam + translation.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 to_world(const Vec3& x_cam) const { return rotation * x_cam + translation; }
    Vec3 to_camera(const Vec3& x_world) const { return rotation.transpose() * (x_world - translation); }
    Quat quaternion() const { return Quat(rotation).normalized(); }
    static Pose from(const Quat& q, const Vec3& t) { return {q.normalized().toRotationMatrix(), t}; }
};

Mat3 skew(const Vec3& v);
Mat3 rotation_from_vector(const Vec3& rvec);
Vec3 vector_from_rotation(const Mat3& rotation);

/// Normalized DLT homography mapping `from` onto `to` (H(2,2) = 1). Throws
/// DomainError for fewer than four points or a degenerate configuration.
Mat3 estimate_homography(std::span<const Vec2> to, std::span<const Vec2> from);

Vec2 apply_homography(const Mat3& h, const Vec2& p);

}  // namespace evcal
