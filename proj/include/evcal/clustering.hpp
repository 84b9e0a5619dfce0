#pragma once

#include "evcal/common.hpp"
#include "evcal/event_core.hpp"

#include <span>
#include <vector>

namespace evcal {

inline constexpr int kNoise = -1;

/// Density-based clustering. A point is a core point when at least `min_pts`
/// points (itself included) lie within `eps`. Cluster ids are assigned in
/// order of discovery while scanning the input; a border point reachable from
/// several clusters joins the one with the lowest id.
std::vector<int> dbscan(std::span<const Vec2> points, double eps, int min_pts);

struct Cluster {
    std::vector<std::size_t> members;  // indices into the window's event list
    Vec2 center = Vec2::Zero();        // coordinate-wise lower median
    int polarity = 1;

    std::size_t size() const { return members.size(); }
};

struct ClusteringParams {
    double eps = 3.0;
    int min_pts = 4;
    std::size_t min_cluster_size = 8;
};

struct PolarityClusters {
    std::vector<Cluster> positive;
    std::vector<Cluster> negative;
};

/// Lower median: element floor((n-1)/2) of the sorted values.
double lower_median(std::vector<double> values);

PolarityClusters extract_clusters(const EventWindow& window, const ClusteringParams& params);

}  // namespace evcal
