#include "evcal/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

namespace evcal {

CircleFit kasa_fit(std::span<const Vec2> points) {
    if (points.size() < 3) throw DomainError("circle fit needs at least three points");
    Vec2 mean = Vec2::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    double scale = 0.0;
    for (const auto& p : points) scale += (p - mean).squaredNorm();
    scale = std::sqrt(scale / static_cast<double>(points.size()));
    if (!(scale > 0.0)) throw DomainError("degenerate point set for circle fit");

    // Unknowns (D, E, F) in x^2 + y^2 + D x + E y + F = 0, in centered and scaled coordinates.
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (const auto& p : points) {
        const Vec2 q = (p - mean) / scale;
        const Eigen::Vector3d row(q.x(), q.y(), 1.0);
        ata.noalias() += row * row.transpose();
        atb += row * (-q.squaredNorm());
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(ata);
    const auto ev = eig.eigenvalues();
    if (ev(0) <= 1e-12 * ev(2)) throw DomainError("collinear points in circle fit");
    const Eigen::Vector3d sol = ata.ldlt().solve(atb);
    const Vec2 c(-0.5 * sol(0), -0.5 * sol(1));
    const double r2 = c.squaredNorm() - sol(2);
    if (!(r2 > 0.0)) throw DomainError("circle fit produced an imaginary radius");

    CircleFit fit;
    fit.center = mean + scale * c;
    fit.radius = scale * std::sqrt(r2);
    double sq = 0.0;
    for (const auto& p : points) {
        const double d = (p - fit.center).norm() - fit.radius;
        sq += d * d;
    }
    fit.normalized_error = std::sqrt(sq / static_cast<double>(points.size())) / fit.radius;
    return fit;
}

ExtractionMode extraction_mode_from_string(const std::string& name) {
    if (name == "hard") return ExtractionMode::hard;
    if (name == "soft") return ExtractionMode::soft;
    throw ValidationError("unknown extraction mode '" + name + "'");
}

std::string to_string(ExtractionMode mode) { return mode == ExtractionMode::hard ? "hard" : "soft"; }

namespace {

std::vector<Vec2> union_pixels(const Cluster& a, const Cluster& b, const EventWindow& window) {
    std::vector<Vec2> pts;
    pts.reserve(a.size() + b.size());
    for (std::size_t m : a.members) pts.push_back(window.events[m].pixel());
    for (std::size_t m : b.members) pts.push_back(window.events[m].pixel());
    return pts;
}

// Indices of `to` sorted by center distance from `center`, ties by index.
std::vector<int> nearest(const Vec2& center, const std::vector<Cluster>& to, std::size_t count) {
    std::vector<int> order(to.size());
    std::iota(order.begin(), order.end(), 0);
    auto dist = [&](int i) { return (to[static_cast<std::size_t>(i)].center - center).squaredNorm(); };
    const auto keep = std::min(count, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](int a, int b) { return std::make_tuple(dist(a), a) < std::make_tuple(dist(b), b); });
    order.resize(keep);
    return order;
}

// Lowest error first; each cluster used at most once.
std::vector<CircleFeature> select_unique(std::vector<CircleFeature> candidates) {
    std::sort(candidates.begin(), candidates.end(), [](const CircleFeature& a, const CircleFeature& b) {
        return std::tie(a.fit_error, a.pos_cluster, a.neg_cluster) <
               std::tie(b.fit_error, b.pos_cluster, b.neg_cluster);
    });
    std::set<int> used_pos, used_neg;
    std::vector<CircleFeature> out;
    for (const auto& c : candidates) {
        if (used_pos.count(c.pos_cluster) || used_neg.count(c.neg_cluster)) continue;
        used_pos.insert(c.pos_cluster);
        used_neg.insert(c.neg_cluster);
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const CircleFeature& a, const CircleFeature& b) {
        return a.pos_cluster < b.pos_cluster;
    });
    return out;
}

std::vector<CircleFeature> swap_roles(std::vector<CircleFeature> features) {
    for (auto& f : features) std::swap(f.pos_cluster, f.neg_cluster);
    return features;
}

}  // namespace

std::vector<CircleFeature> hard_extract(const std::vector<Cluster>& pos, const std::vector<Cluster>& neg,
                                        const EventWindow& window, const FeatureParams& params) {
    std::vector<CircleFeature> candidates;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        for (int j : nearest(pos[i].center, neg, static_cast<std::size_t>(std::max(params.k, 0)))) {
            const Cluster& n = neg[static_cast<std::size_t>(j)];
            const auto pts = union_pixels(pos[i], n, window);
            CircleFit fit;
            try {
                fit = kasa_fit(pts);
            } catch (const DomainError&) {
                continue;
            }
            const double distance = (pos[i].center - n.center).norm();
            const Vec2 midpoint = 0.5 * (pos[i].center + n.center);
            const double diameter = 2.0 * fit.radius;
            if (std::abs(diameter - distance) > params.tol_d * diameter) continue;
            if ((fit.center - midpoint).norm() > params.tol_c * fit.radius) continue;
            candidates.push_back({fit.center, fit.radius, fit.normalized_error, static_cast<int>(i), j});
        }
    }
    return select_unique(std::move(candidates));
}

std::vector<CircleFeature> soft_extract(const std::vector<Cluster>& pos, const std::vector<Cluster>& neg,
                                        const EventWindow& window, const FeatureParams& params) {
    std::vector<CircleFeature> candidates;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const auto near = nearest(pos[i].center, neg, 1);
        if (near.empty()) continue;
        const int j = near.front();
        const Cluster& n = neg[static_cast<std::size_t>(j)];
        const double distance = (pos[i].center - n.center).norm();
        if (!(distance > 0.0)) continue;
        const auto pts = union_pixels(pos[i], n, window);
        CircleFit fit;
        try {
            fit = kasa_fit(pts);
        } catch (const DomainError&) {
            continue;
        }
        if (fit.normalized_error > params.tol_soft) continue;
        candidates.push_back({0.5 * (pos[i].center + n.center), 0.5 * distance, fit.normalized_error,
                              static_cast<int>(i), j});
    }
    return select_unique(std::move(candidates));
}

std::vector<CircleFeature> mutual_consistency_filter(const std::vector<CircleFeature>& fwd,
                                                     const std::vector<CircleFeature>& rev) {
    std::set<std::pair<int, int>> reverse_pairs;
    for (const auto& f : rev) reverse_pairs.emplace(f.pos_cluster, f.neg_cluster);
    std::vector<CircleFeature> out;
    for (const auto& f : fwd) {
        if (reverse_pairs.count({f.pos_cluster, f.neg_cluster})) out.push_back(f);
    }
    return out;
}

std::vector<CircleFeature> extract_features(const PolarityClusters& clusters, const EventWindow& window,
                                            const FeatureParams& params) {
    const auto& pos = clusters.positive;
    const auto& neg = clusters.negative;
    if (params.mode == ExtractionMode::hard) {
        return mutual_consistency_filter(hard_extract(pos, neg, window, params),
                                         swap_roles(hard_extract(neg, pos, window, params)));
    }
    return mutual_consistency_filter(soft_extract(pos, neg, window, params),
                                     swap_roles(soft_extract(neg, pos, window, params)));
}

}  // namespace evcal
