#include "evcal/pattern.hpp"

#include "evcal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace evcal {

void PatternSpec::validate() const {
    if (rows < 2 || cols < 2 || !(spacing > 0.0) || !(circle_radius > 0.0) || !(circle_radius < 0.5 * spacing)) {
        throw ValidationError("invalid pattern specification");
    }
}

std::vector<Vec3> board_points(const PatternSpec& spec) {
    spec.validate();
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(spec.size()));
    for (int i = 0; i < spec.rows; ++i) {
        for (int j = 0; j < spec.cols; ++j) {
            const double y = spec.asymmetric ? (2 * i + j % 2) * spec.spacing / 2.0 : i * spec.spacing;
            pts.emplace_back(j * spec.spacing, y, 0.0);
        }
    }
    return pts;
}

Vec2 PatternDetection::row_direction(const PatternSpec& spec) const {
    return features.at(static_cast<std::size_t>(spec.cols - 1)).center - features.at(0).center;
}

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Andrew's monotone chain; returns indices in counter-clockwise order (in a
// y-up sense) without collinear vertices.
std::vector<int> convex_hull(const std::vector<Vec2>& pts) {
    std::vector<int> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::make_pair(pts[a].x(), pts[a].y()) < std::make_pair(pts[b].x(), pts[b].y());
    });
    if (idx.size() < 3) return idx;
    std::vector<int> hull(2 * idx.size());
    std::size_t k = 0;
    auto turn = [&](int o, int a, int b) { return cross2(pts[a] - pts[o], pts[b] - pts[o]); };
    for (int i : idx) {
        while (k >= 2 && turn(hull[k - 2], hull[k - 1], i) <= 0.0) --k;
        hull[k++] = i;
    }
    for (std::size_t t = idx.size() - 1, lower = k + 1; t-- > 0;) {
        const int i = idx[t];
        while (k >= lower && turn(hull[k - 2], hull[k - 1], i) <= 0.0) --k;
        hull[k++] = i;
    }
    hull.resize(k - 1);
    return hull;
}

// Keeps the `count` hull vertices with the sharpest turns, in hull order.
std::vector<int> salient_vertices(const std::vector<int>& hull, const std::vector<Vec2>& pts, int count) {
    const auto n = hull.size();
    if (static_cast<int>(n) <= count) return hull;
    std::vector<std::pair<double, std::size_t>> turn;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = pts[hull[(i + n - 1) % n]];
        const Vec2 b = pts[hull[i]];
        const Vec2 c = pts[hull[(i + 1) % n]];
        const Vec2 u = (b - a).normalized();
        const Vec2 v = (c - b).normalized();
        turn.emplace_back(-std::atan2(std::abs(cross2(u, v)), u.dot(v)), i);
    }
    std::sort(turn.begin(), turn.end());
    std::vector<std::size_t> keep;
    for (int i = 0; i < count; ++i) keep.push_back(turn[static_cast<std::size_t>(i)].second);
    std::sort(keep.begin(), keep.end());
    std::vector<int> out;
    for (auto i : keep) out.push_back(hull[i]);
    return out;
}

struct Candidate {
    std::vector<int> assignment;  // circle s -> feature index
    Mat3 homography;
    double max_error;
};

std::optional<Candidate> verify(const Mat3& hypothesis, const std::vector<Vec2>& board2d,
                                const std::vector<Vec2>& centers, const GridParams& params) {
    const auto n = board2d.size();
    std::vector<int> assignment(n, -1);
    std::vector<char> used(centers.size(), 0);

    // Projected spacing bounds the assignment gate.
    std::vector<Vec2> projected(n);
    for (std::size_t s = 0; s < n; ++s) projected[s] = apply_homography(hypothesis, board2d[s]);
    double min_spacing = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) min_spacing = std::min(min_spacing, (projected[a] - projected[b]).norm());
    const double gate = std::max(0.45 * min_spacing, params.tol_grid);

    for (std::size_t s = 0; s < n; ++s) {
        double best = std::numeric_limits<double>::infinity();
        int best_i = -1;
        for (std::size_t i = 0; i < centers.size(); ++i) {
            const double d = (centers[i] - projected[s]).squaredNorm();
            if (d < best) {
                best = d;
                best_i = static_cast<int>(i);
            }
        }
        if (best_i < 0 || std::sqrt(best) > gate || used[static_cast<std::size_t>(best_i)]) return std::nullopt;
        used[static_cast<std::size_t>(best_i)] = 1;
        assignment[s] = best_i;
    }

    std::vector<Vec2> image(n);
    for (std::size_t s = 0; s < n; ++s) image[s] = centers[static_cast<std::size_t>(assignment[s])];
    Mat3 h;
    try {
        h = estimate_homography(image, board2d);
    } catch (const DomainError&) {
        return std::nullopt;
    }
    double worst = 0.0;
    for (std::size_t s = 0; s < n; ++s) worst = std::max(worst, (apply_homography(h, board2d[s]) - image[s]).norm());
    if (worst > params.tol_grid) return std::nullopt;
    return Candidate{std::move(assignment), h, worst};
}

// Sign of the local Jacobian determinant of the board-to-image map.
double orientation(const Mat3& h, const Vec2& at) {
    const double eps = 1e-3;
    const Vec2 o = apply_homography(h, at);
    const Vec2 dx = apply_homography(h, at + Vec2(eps, 0.0)) - o;
    const Vec2 dy = apply_homography(h, at + Vec2(0.0, eps)) - o;
    return cross2(dx, dy);
}

}  // namespace

DetectionResult detect_grid(const std::vector<CircleFeature>& input, const PatternSpec& spec,
                            const GridParams& params, const PatternDetection* previous) {
    const auto board = board_points(spec);
    const auto n = board.size();
    if (input.size() < n) return DetectionFailure::too_few_features;

    // Canonical feature order makes the search independent of input order.
    std::vector<CircleFeature> features = input;
    std::sort(features.begin(), features.end(), [](const CircleFeature& a, const CircleFeature& b) {
        return std::make_tuple(a.center.x(), a.center.y(), a.radius) <
               std::make_tuple(b.center.x(), b.center.y(), b.radius);
    });
    std::vector<Vec2> centers;
    for (const auto& f : features) centers.push_back(f.center);
    std::vector<Vec2> board2d;
    for (const auto& p : board) board2d.push_back(p.head<2>());
    const Vec2 board_mid = std::accumulate(board2d.begin(), board2d.end(), Vec2(Vec2::Zero())) / static_cast<double>(n);

    // Grid corners in cyclic order around the board outline.
    const std::array<std::size_t, 4> corner_ids = {0, static_cast<std::size_t>(spec.cols - 1), n - 1,
                                                   n - static_cast<std::size_t>(spec.cols)};
    std::array<Vec2, 4> board_corners;
    for (std::size_t c = 0; c < 4; ++c) board_corners[c] = board2d[corner_ids[c]];

    const auto hull = salient_vertices(convex_hull(centers), centers, params.max_hull_vertices);
    const auto h = hull.size();
    std::vector<Candidate> passing;
    if (h >= 4) {
        for (std::size_t a = 0; a < h; ++a)
            for (std::size_t b = a + 1; b < h; ++b)
                for (std::size_t c = b + 1; c < h; ++c)
                    for (std::size_t d = c + 1; d < h; ++d) {
                        const std::array<int, 4> quad = {hull[a], hull[b], hull[c], hull[d]};
                        for (int dir : {1, -1}) {
                            for (int rot = 0; rot < 4; ++rot) {
                                std::array<Vec2, 4> image;
                                for (int c4 = 0; c4 < 4; ++c4) {
                                    image[static_cast<std::size_t>(c4)] = centers[static_cast<std::size_t>(
                                        quad[static_cast<std::size_t>(((rot + dir * c4) % 4 + 4) % 4)])];
                                }
                                Mat3 hyp;
                                try {
                                    hyp = estimate_homography(image, board_corners);
                                } catch (const DomainError&) {
                                    continue;
                                }
                                if (!params.allow_mirrored && orientation(hyp, board_mid) <= 0.0) continue;
                                if (auto cand = verify(hyp, board2d, centers, params)) {
                                    if (!params.allow_mirrored && orientation(cand->homography, board_mid) <= 0.0) continue;
                                    const bool seen = std::any_of(passing.begin(), passing.end(), [&](const Candidate& p) {
                                        return p.assignment == cand->assignment;
                                    });
                                    if (!seen) passing.push_back(std::move(*cand));
                                }
                            }
                        }
                    }
    }
    if (passing.empty()) return DetectionFailure::no_consistent_grid;

    auto to_detection = [&](const Candidate& c) {
        PatternDetection det;
        det.board = board;
        det.homography = c.homography;
        det.max_error = c.max_error;
        for (int i : c.assignment) det.features.push_back(features[static_cast<std::size_t>(i)]);
        return det;
    };

    std::size_t best = 0;
    if (passing.size() > 1) {
        if (previous) {
            const Vec2 ref = previous->row_direction(spec);
            double best_angle = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < passing.size(); ++i) {
                const Vec2 dir = to_detection(passing[i]).row_direction(spec);
                const double angle = std::abs(std::atan2(cross2(ref, dir), ref.dot(dir)));
                if (angle < best_angle) {
                    best_angle = angle;
                    best = i;
                }
            }
        } else {
            auto key = [&](const Candidate& c) {
                std::vector<std::pair<double, double>> k;
                for (int i : c.assignment) k.emplace_back(centers[static_cast<std::size_t>(i)].x(), centers[static_cast<std::size_t>(i)].y());
                return k;
            };
            for (std::size_t i = 1; i < passing.size(); ++i)
                if (key(passing[i]) < key(passing[best])) best = i;
        }
    }
    return to_detection(passing[best]);
}

bool orientation_consistency_check(const PatternDetection& current, const PatternDetection& previous,
                                   const PatternSpec& spec, double dt, double max_rot_rate) {
    if (!(dt > 0.0)) throw PreconditionError("orientation check needs dt > 0");
    const Vec2 a = previous.row_direction(spec);
    const Vec2 b = current.row_direction(spec);
    const double angle = std::abs(std::atan2(cross2(a, b), a.dot(b)));
    return angle / dt <= max_rot_rate;
}

}  // namespace evcal
