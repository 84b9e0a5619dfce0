#include "evcal/init_calibration.hpp"

#include "evcal/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace evcal {

namespace {

// Row of the zero-skew conic constraint: h_i^T B h_j with
// b = (B11, B22, B13, B23, B33).
Eigen::Matrix<double, 1, 5> conic_row(const Mat3& h, int i, int j) {
    const Vec3 a = h.col(i);
    const Vec3 b = h.col(j);
    Eigen::Matrix<double, 1, 5> v;
    v << a(0) * b(0), a(1) * b(1), a(2) * b(0) + a(0) * b(2), a(2) * b(1) + a(1) * b(2), a(2) * b(2);
    return v;
}

}  // namespace

ZhangResult zhang_intrinsics(std::span<const Mat3> homographies) {
    if (homographies.size() < 3) throw PreconditionError("Zhang initialization needs at least three homographies");

    // Condition pixel coordinates: x' = (x - c0) / s keeps K upper triangular with zero skew.
    Vec2 c0 = Vec2::Zero();
    for (const auto& h : homographies) c0 += h.col(2).hnormalized();
    c0 /= static_cast<double>(homographies.size());
    double s = 0.0;
    for (const auto& h : homographies) s += std::abs(h.col(2).hnormalized().x()) + std::abs(h.col(2).hnormalized().y());
    s = std::max(1.0, s / static_cast<double>(homographies.size()));
    Mat3 cond;
    cond << 1.0 / s, 0.0, -c0.x() / s,
            0.0, 1.0 / s, -c0.y() / s,
            0.0, 0.0, 1.0;

    const auto n = static_cast<Eigen::Index>(homographies.size());
    Eigen::MatrixXd v(2 * n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        Mat3 h = cond * homographies[static_cast<std::size_t>(i)];
        h /= h.norm();
        v.row(2 * i) = conic_row(h, 0, 1);
        v.row(2 * i + 1) = conic_row(h, 0, 0) - conic_row(h, 1, 1);
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double condition = sv(3) > 0.0 ? sv(0) / sv(3) : std::numeric_limits<double>::infinity();
    if (!(sv(3) > 1e-9 * sv(0))) throw ConditioningError("views do not constrain the intrinsics", condition);

    const Eigen::Matrix<double, 5, 1> b = svd.matrixV().col(4);
    const double b11 = b(0), b22 = b(1), b13 = b(2), b23 = b(3), b33 = b(4);
    const double lambda = b33 - b13 * b13 / b11 - b23 * b23 / b22;
    if (!(lambda / b11 > 0.0) || !(lambda / b22 > 0.0)) {
        throw ConditioningError("conic estimate is not positive definite", condition);
    }
    ZhangResult out;
    out.fx = std::sqrt(lambda / b11) * s;
    out.fy = std::sqrt(lambda / b22) * s;
    out.cx = -b13 / b11 * s + c0.x();
    out.cy = -b23 / b22 * s + c0.y();
    out.condition = condition;
    return out;
}

Pose pose_from_homography(const Mat3& h) {
    const double lambda = 2.0 / (h.col(0).norm() + h.col(1).norm());
    Vec3 a1 = lambda * h.col(0);
    Vec3 a2 = lambda * h.col(1);
    Vec3 b = lambda * h.col(2);
    if (b.z() < 0.0) {
        a1 = -a1;
        a2 = -a2;
        b = -b;
    }
    Mat3 a;
    a.col(0) = a1;
    a.col(1) = a2;
    a.col(2) = a1.cross(a2);
    const Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 rot = svd.matrixU() * svd.matrixV().transpose();
    if (rot.determinant() < 0.0) {
        Mat3 u = svd.matrixU();
        u.col(2) = -u.col(2);
        rot = u * svd.matrixV().transpose();
    }
    // x_cam = rot * x_world + b
    return Pose{rot.transpose(), -rot.transpose() * b};
}

std::array<double, 2> estimate_forward_radial(const Intrinsics& pinhole, std::span<const PlanarView> views,
                                              std::span<const Pose> poses) {
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d atb = Eigen::Vector2d::Zero();
    for (std::size_t v = 0; v < views.size(); ++v) {
        for (std::size_t i = 0; i < views[v].image.size(); ++i) {
            const Vec3 xc = poses[v].to_camera(Vec3(views[v].board[i].x(), views[v].board[i].y(), 0.0));
            if (!(xc.z() > 0.0)) continue;
            const Vec2 u = xc.hnormalized();
            const double r2 = u.squaredNorm();
            const Vec2 ideal(pinhole.fx * u.x() + pinhole.cx, pinhole.fy * u.y() + pinhole.cy);
            const Vec2 off(ideal.x() - pinhole.cx, ideal.y() - pinhole.cy);
            const Vec2 obs = views[v].image[i];
            for (int d = 0; d < 2; ++d) {
                const Eigen::Vector2d row(off(d) * r2, off(d) * r2 * r2);
                ata += row * row.transpose();
                atb += row * (obs(d) - ideal(d));
            }
        }
    }
    if (std::abs(ata.determinant()) < 1e-300) return {0.0, 0.0};
    const Eigen::Vector2d c = ata.ldlt().solve(atb);
    return {c(0), c(1)};
}

double reprojection_error(const Pose& pose, const Intrinsics& k, const Vec2& image, const Vec3& board) {
    const Vec3 xc = pose.to_camera(board);
    if (!(xc.z() > 0.0)) return std::numeric_limits<double>::infinity();
    try {
        return (project(k, xc) - image).norm();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

Pose refine_pose(const Pose& initial, const Intrinsics& k, std::span<const Vec2> image,
                 std::span<const Vec3> board, int iterations) {
    // Work on the world-to-camera transform x_cam = a * x + b.
    Mat3 a = initial.rotation.transpose();
    Vec3 b = -a * initial.translation;
    const auto n = image.size();
    auto residuals = [&](const Mat3& ra, const Vec3& rb, Eigen::VectorXd& r) {
        r.resize(static_cast<Eigen::Index>(2 * n));
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 xc = ra * board[i] + rb;
            Vec2 p;
            if (xc.z() > 1e-9) {
                try {
                    p = project(k, xc);
                } catch (const DomainError&) {
                    p = Vec2::Constant(1e6);
                }
            } else {
                p = Vec2::Constant(1e6);
            }
            r.segment<2>(static_cast<Eigen::Index>(2 * i)) = p - image[i];
        }
        return r.squaredNorm();
    };
    auto apply = [](const Mat3& ra, const Vec3& rb, const Eigen::Matrix<double, 6, 1>& d, Mat3& oa, Vec3& ob) {
        oa = rotation_from_vector(d.head<3>()) * ra;
        ob = rb + d.tail<3>();
    };

    Eigen::VectorXd r, rp, rm;
    double cost = residuals(a, b, r);
    double mu = 1e-3;
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(2 * n), 6);
        for (int p = 0; p < 6; ++p) {
            Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
            const double h = p < 3 ? 1e-7 : 1e-7 * std::max(1.0, b.norm());
            d(p) = h;
            Mat3 ap, am;
            Vec3 bp, bm;
            apply(a, b, d, ap, bp);
            apply(a, b, -d, am, bm);
            residuals(ap, bp, rp);
            residuals(am, bm, rm);
            jac.col(p) = (rp - rm) / (2.0 * h);
        }
        const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
        const Eigen::Matrix<double, 6, 1> g = jac.transpose() * r;
        bool improved = false;
        for (int tries = 0; tries < 10; ++tries) {
            Eigen::Matrix<double, 6, 6> lhs = jtj;
            lhs.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Matrix<double, 6, 1> step = -lhs.ldlt().solve(g);
            Mat3 na;
            Vec3 nb;
            apply(a, b, step, na, nb);
            Eigen::VectorXd nr;
            const double ncost = residuals(na, nb, nr);
            if (ncost < cost) {
                a = na;
                b = nb;
                r = nr;
                const double rel = (cost - ncost) / std::max(cost, 1e-30);
                cost = ncost;
                mu = std::max(mu * 0.3, 1e-12);
                improved = true;
                if (rel < 1e-12) it = iterations;
                break;
            }
            mu *= 10.0;
        }
        if (!improved) break;
    }
    return Pose{a.transpose(), -a.transpose() * b};
}

std::optional<PnpResult> pnp_ransac(const PatternDetection& detection, const Intrinsics& k,
                                    const RansacParams& params) {
    const auto n = detection.features.size();
    if (n < 4) return std::nullopt;
    std::vector<Vec2> normalized(n), board2d(n);
    for (std::size_t i = 0; i < n; ++i) {
        normalized[i] = normalize(k, detection.features[i].center).head<2>();
        board2d[i] = detection.board[i].head<2>();
    }
    auto inliers_of = [&](const Pose& pose) {
        std::vector<int> in;
        for (std::size_t i = 0; i < n; ++i) {
            if (reprojection_error(pose, k, detection.features[i].center, detection.board[i]) <= params.inlier_tol_px) {
                in.push_back(static_cast<int>(i));
            }
        }
        return in;
    };

    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<int> best_inliers;
    Pose best_pose;
    for (int it = 0; it < params.iterations; ++it) {
        std::array<std::size_t, 4> sample{};
        for (std::size_t s = 0; s < 4; ++s) {
            std::size_t c;
            do {
                c = pick(rng);
            } while (std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), c) !=
                     sample.begin() + static_cast<std::ptrdiff_t>(s));
            sample[s] = c;
        }
        std::array<Vec2, 4> img, brd;
        for (std::size_t s = 0; s < 4; ++s) {
            img[s] = normalized[sample[s]];
            brd[s] = board2d[sample[s]];
        }
        Mat3 h;
        try {
            h = estimate_homography(img, brd);
        } catch (const DomainError&) {
            continue;
        }
        const Pose pose = pose_from_homography(h);
        auto in = inliers_of(pose);
        if (in.size() > best_inliers.size()) {
            best_inliers = std::move(in);
            best_pose = pose;
        }
    }
    const auto min_inliers = static_cast<std::size_t>(std::ceil(params.min_inlier_fraction * static_cast<double>(n)));
    if (best_inliers.size() < std::max<std::size_t>(4, min_inliers)) return std::nullopt;

    // Refine and re-collect inliers until the set stops changing.
    PnpResult result{best_pose, best_inliers, 0.0};
    for (int round = 0; round < 5; ++round) {
        std::vector<Vec2> img;
        std::vector<Vec3> brd;
        for (int i : result.inliers) {
            img.push_back(detection.features[static_cast<std::size_t>(i)].center);
            brd.push_back(detection.board[static_cast<std::size_t>(i)]);
        }
        result.pose = refine_pose(result.pose, k, img, brd);
        auto in = inliers_of(result.pose);
        if (in == result.inliers) break;
        if (in.size() < std::max<std::size_t>(4, min_inliers)) return std::nullopt;
        result.inliers = std::move(in);
    }
    double sq = 0.0;
    for (int i : result.inliers) {
        const double e = reprojection_error(result.pose, k, detection.features[static_cast<std::size_t>(i)].center,
                                            detection.board[static_cast<std::size_t>(i)]);
        sq += e * e;
    }
    result.rms_px = std::sqrt(sq / static_cast<double>(result.inliers.size()));
    return result;
}

std::vector<std::size_t> velocity_filter(std::span<const TimedPose> frames, double max_trans_vel,
                                         double max_rot_vel) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (kept.empty()) {
            kept.push_back(i);
            continue;
        }
        const auto& prev = frames[kept.back()];
        const double dt = (frames[i].t_us - prev.t_us) * 1e-6;
        if (!(dt > 0.0)) continue;
        const double v = (frames[i].pose.translation - prev.pose.translation).norm() / dt;
        const double w = Eigen::AngleAxisd(prev.pose.rotation.transpose() * frames[i].pose.rotation).angle() / dt;
        if (v <= max_trans_vel && w <= max_rot_vel) kept.push_back(i);
    }
    return kept;
}

bool reproject_circle(const Pose& pose, const Intrinsics& k, const Vec3& center, double radius,
                      const SensorGeometry& sensor, Vec2& image_center, double& image_radius) {
    constexpr int kSamples = 16;
    try {
        const Vec3 cc = pose.to_camera(center);
        if (!(cc.z() > 0.0)) return false;
        image_center = project(k, cc);
        if (!sensor.contains(image_center.x(), image_center.y())) return false;
        double sum = 0.0;
        for (int i = 0; i < kSamples; ++i) {
            const double a = 2.0 * M_PI * i / kSamples;
            const Vec3 pc = pose.to_camera(center + radius * Vec3(std::cos(a), std::sin(a), 0.0));
            if (!(pc.z() > 0.0)) return false;
            const Vec2 p = project(k, pc);
            if (!sensor.contains(p.x(), p.y())) return false;
            sum += (p - image_center).norm();
        }
        image_radius = sum / kSamples;
        return image_radius > 0.0;
    } catch (const DomainError&) {
        return false;
    }
}

void cross_validate_features(ReferenceFrame& frame, const Intrinsics& k, const PatternSpec& spec,
                             const SensorGeometry& sensor, const CrossValidationParams& params) {
    frame.rectified.clear();
    frame.event_circle.assign(frame.window.events.size(), -1);
    frame.accepted = false;
    if (!frame.pose) return;
    const auto board = board_points(spec);
    const auto n = board.size();

    std::vector<char> visible(n, 0);
    std::vector<Vec2> centers(n, Vec2::Zero());
    std::vector<double> radii(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        visible[s] = reproject_circle(*frame.pose, k, board[s], spec.circle_radius, sensor, centers[s], radii[s]);
    }

    std::vector<std::vector<Vec2>> assigned(n);
    std::vector<std::vector<std::size_t>> members(n);
    for (std::size_t e = 0; e < frame.window.events.size(); ++e) {
        const Vec2 m = frame.window.events[e].pixel();
        double best = std::numeric_limits<double>::infinity();
        int best_s = -1;
        for (std::size_t s = 0; s < n; ++s) {
            if (!visible[s]) continue;
            const double d = std::abs((m - centers[s]).norm() - radii[s]);
            if (d <= params.assign_ring * radii[s] && d < best) {
                best = d;
                best_s = static_cast<int>(s);
            }
        }
        if (best_s >= 0) {
            assigned[static_cast<std::size_t>(best_s)].push_back(m);
            members[static_cast<std::size_t>(best_s)].push_back(e);
        }
    }

    for (std::size_t s = 0; s < n; ++s) {
        if (!visible[s] || static_cast<int>(assigned[s].size()) < params.min_events) continue;
        CircleFit fit;
        try {
            fit = kasa_fit(assigned[s]);
        } catch (const DomainError&) {
            continue;
        }
        const double ratio = fit.radius / radii[s];
        if ((fit.center - centers[s]).norm() > params.tol_center * radii[s]) continue;
        if (ratio < 1.0 - params.tol_radius || ratio > 1.0 + params.tol_radius) continue;
        if (!sensor.contains(fit.center.x(), fit.center.y())) continue;
        frame.rectified.push_back({static_cast<int>(s), fit.center, fit.radius, centers[s], radii[s]});
        for (std::size_t e : members[s]) frame.event_circle[e] = static_cast<int>(s);
    }

    const int min_features = params.min_features > 0 ? params.min_features : (static_cast<int>(n) + 2) / 3;
    frame.accepted = static_cast<int>(frame.rectified.size()) >= min_features;
    if (!frame.accepted) std::fill(frame.event_circle.begin(), frame.event_circle.end(), -1);
}

}  // namespace evcal
