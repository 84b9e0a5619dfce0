#include "evcal/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace evcal {

namespace {

// Uniform grid with cell size eps; a neighborhood query touches 3x3 cells.
class GridIndex {
public:
    GridIndex(std::span<const Vec2> points, double eps) : points_(points), eps_(eps) {
        cells_.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(points[i].x()), cell_of(points[i].y()))].push_back(i);
    }

    void neighbors(std::size_t i, std::vector<std::size_t>& out) const {
        out.clear();
        const Vec2& p = points_[i];
        const std::int64_t cx = cell_of(p.x());
        const std::int64_t cy = cell_of(p.y());
        const double eps2 = eps_ * eps_;
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const auto it = cells_.find(key(cx + dx, cy + dy));
                if (it == cells_.end()) continue;
                for (std::size_t j : it->second) {
                    if ((points_[j] - p).squaredNorm() <= eps2) out.push_back(j);
                }
            }
        }
        std::sort(out.begin(), out.end());
    }

private:
    std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / eps_)); }
    static std::int64_t key(std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xFFFFFFFF); }

    std::span<const Vec2> points_;
    double eps_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

std::vector<int> dbscan(std::span<const Vec2> points, double eps, int min_pts) {
    if (!(eps > 0.0) || min_pts < 1) throw PreconditionError("dbscan requires eps > 0 and min_pts >= 1");
    constexpr int kUnvisited = -2;
    std::vector<int> labels(points.size(), kUnvisited);
    const GridIndex index(points, eps);
    std::vector<std::size_t> neighborhood;
    std::vector<std::size_t> seeds;
    int next_id = 0;

    for (std::size_t i = 0; i < points.size(); ++i) {
        if (labels[i] != kUnvisited) continue;
        index.neighbors(i, neighborhood);
        if (static_cast<int>(neighborhood.size()) < min_pts) {
            labels[i] = kNoise;
            continue;
        }
        const int id = next_id++;
        labels[i] = id;
        seeds.assign(neighborhood.begin(), neighborhood.end());
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const std::size_t j = seeds[s];
            if (labels[j] == kNoise) labels[j] = id;  // border point claimed
            if (labels[j] != kUnvisited) continue;
            labels[j] = id;
            index.neighbors(j, neighborhood);
            if (static_cast<int>(neighborhood.size()) >= min_pts) {
                seeds.insert(seeds.end(), neighborhood.begin(), neighborhood.end());
            }
        }
    }
    return labels;
}

double lower_median(std::vector<double> values) {
    if (values.empty()) throw PreconditionError("median of empty set");
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

PolarityClusters extract_clusters(const EventWindow& window, const ClusteringParams& params) {
    PolarityClusters out;
    for (int polarity : {1, -1}) {
        std::vector<std::size_t> source;
        std::vector<Vec2> points;
        for (std::size_t i = 0; i < window.events.size(); ++i) {
            if (window.events[i].polarity == polarity) {
                source.push_back(i);
                points.push_back(window.events[i].pixel());
            }
        }
        const auto labels = dbscan(points, params.eps, params.min_pts);
        const int count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
        std::vector<Cluster> clusters(static_cast<std::size_t>(std::max(count, 0)));
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= 0) clusters[static_cast<std::size_t>(labels[i])].members.push_back(source[i]);
        }
        auto& target = polarity > 0 ? out.positive : out.negative;
        for (auto& c : clusters) {
            if (c.size() < params.min_cluster_size) continue;
            std::vector<double> xs, ys;
            xs.reserve(c.size());
            ys.reserve(c.size());
            for (std::size_t m : c.members) {
                xs.push_back(window.events[m].x);
                ys.push_back(window.events[m].y);
            }
            c.center = {lower_median(std::move(xs)), lower_median(std::move(ys))};
            c.polarity = polarity;
            target.push_back(std::move(c));
        }
    }
    return out;
}

}  // namespace evcal
