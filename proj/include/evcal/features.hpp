#pragma once

#include "evcal/clustering.hpp"
#include "evcal/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace evcal {

struct CircleFit {
    Vec2 center = Vec2::Zero();
    double radius = 0.0;
    double normalized_error = 0.0;  // RMS(|p - center| - radius) / radius
};

/// Algebraic (Kasa) circle fit minimizing sum (x^2 + y^2 + Dx + Ey + F)^2.
/// Throws DomainError for fewer than three points or a collinear set.
CircleFit kasa_fit(std::span<const Vec2> points);

struct CircleFeature {
    Vec2 center = Vec2::Zero();
    double radius = 0.0;
    double fit_error = 0.0;
    int pos_cluster = -1;
    int neg_cluster = -1;
};

enum class ExtractionMode { hard, soft };

ExtractionMode extraction_mode_from_string(const std::string& name);
std::string to_string(ExtractionMode mode);

struct FeatureParams {
    ExtractionMode mode = ExtractionMode::soft;
    int k = 3;              // candidate negatives per positive cluster (hard mode)
    double tol_d = 0.25;    // relative diameter mismatch
    double tol_c = 0.25;    // center mismatch as a fraction of the fitted radius
    double tol_soft = 0.35; // maximum normalized fit error in soft mode
};

/// For each cluster in `from`, fits circles against its k nearest clusters in
/// `to`. Indices in the returned features refer to the positive and negative
/// lists passed here; callers swap the arguments for the reverse search and
/// swap the index fields back.
std::vector<CircleFeature> hard_extract(const std::vector<Cluster>& pos, const std::vector<Cluster>& neg,
                                        const EventWindow& window, const FeatureParams& params);

std::vector<CircleFeature> soft_extract(const std::vector<Cluster>& pos, const std::vector<Cluster>& neg,
                                        const EventWindow& window, const FeatureParams& params);

/// Keeps forward features whose (pos, neg) pairing also appears in `rev`.
std::vector<CircleFeature> mutual_consistency_filter(const std::vector<CircleFeature>& fwd,
                                                     const std::vector<CircleFeature>& rev);

/// Forward search, reverse search (negatives to positives) and the mutual check.
std::vector<CircleFeature> extract_features(const PolarityClusters& clusters, const EventWindow& window,
                                            const FeatureParams& params);

}  // namespace evcal
