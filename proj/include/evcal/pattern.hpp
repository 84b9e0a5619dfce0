#pragma once

#include "evcal/common.hpp"
#include "evcal/features.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace evcal {

/// Planar circle grid. In the asymmetric layout odd columns are shifted by
/// half a spacing along y.
struct PatternSpec {
    int rows = 4;
    int cols = 9;
    double spacing = 0.04;        // meters, center to center
    double circle_radius = 0.01;  // meters
    bool asymmetric = true;

    int size() const { return rows * cols; }
    void validate() const;
};

/// Metric circle centers l_s (z = 0), row-major: s = i * cols + j.
std::vector<Vec3> board_points(const PatternSpec& spec);

struct PatternDetection {
    std::vector<CircleFeature> features;  // features[s] observes circle s
    std::vector<Vec3> board;              // board[s] = l_s
    Mat3 homography = Mat3::Identity();   // board xy -> pixel
    double max_error = 0.0;               // pixels, over all circles

    /// Image direction of the first pattern row (circle 0 to circle cols-1).
    Vec2 row_direction(const PatternSpec& spec) const;
};

enum class DetectionFailure { too_few_features, no_consistent_grid };

using DetectionResult = std::variant<PatternDetection, DetectionFailure>;

struct GridParams {
    double tol_grid = 3.0;           // max reprojection error of the fitted homography, px
    int max_hull_vertices = 8;       // hull vertices considered as grid corners
    bool allow_mirrored = false;     // accept orientation-reversing assignments
};

/// Assigns every pattern circle to one feature. The result does not depend
/// on the order of `features`. When several assignments fit (symmetric
/// layouts), the one whose first row best matches `previous` wins; without a
/// previous detection the lexicographically smallest image ordering wins.
DetectionResult detect_grid(const std::vector<CircleFeature>& features, const PatternSpec& spec,
                            const GridParams& params = {}, const PatternDetection* previous = nullptr);

/// Angle between the first-row directions of two detections divided by dt
/// must not exceed max_rot_rate (rad/s).
bool orientation_consistency_check(const PatternDetection& current, const PatternDetection& previous,
                                   const PatternSpec& spec, double dt, double max_rot_rate);

}  // namespace evcal
