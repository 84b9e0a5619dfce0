#pragma once

// Independent reference implementations used to check the library.

#include <evcal/clustering.hpp>
#include <evcal/spline.hpp>

#include <vector>

namespace oracle {

// O(n^2) DBSCAN: connected components of core points numbered by their
// lowest-index core point; border points join the lowest-numbered
// neighboring cluster.
inline std::vector<int> dbscan(const std::vector<evcal::Vec2>& pts, double eps, int min_pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<std::size_t>> nb(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if ((pts[i] - pts[j]).squaredNorm() <= eps * eps) nb[i].push_back(j);
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = static_cast<int>(nb[i].size()) >= min_pts;

    std::vector<int> comp(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || comp[i] >= 0) continue;
        std::vector<std::size_t> stack{i};
        comp[i] = next;
        while (!stack.empty()) {
            const auto a = stack.back();
            stack.pop_back();
            for (auto b : nb[a]) {
                if (core[b] && comp[b] < 0) {
                    comp[b] = next;
                    stack.push_back(b);
                }
            }
        }
        ++next;
    }
    std::vector<int> labels(n, evcal::kNoise);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) {
            labels[i] = comp[i];
            continue;
        }
        int best = evcal::kNoise;
        for (auto b : nb[i])
            if (core[b] && (best == evcal::kNoise || comp[b] < best)) best = comp[b];
        labels[i] = best;
    }
    return labels;
}

// Recursive B-spline basis, right-closed at the domain end.
inline double cox_de_boor(const std::vector<double>& u, int i, int p, double t) {
    const auto at = [&](int k) { return u[static_cast<std::size_t>(k)]; };
    if (p == 0) {
        const double end = u.back();
        if (t == end) return (at(i) < end && at(i + 1) == end) ? 1.0 : 0.0;
        return (at(i) <= t && t < at(i + 1)) ? 1.0 : 0.0;
    }
    double a = 0.0, b = 0.0;
    const double d1 = at(i + p) - at(i);
    const double d2 = at(i + p + 1) - at(i + 1);
    if (d1 > 0.0) a = (t - at(i)) / d1 * cox_de_boor(u, i, p - 1, t);
    if (d2 > 0.0) b = (at(i + p + 1) - t) / d2 * cox_de_boor(u, i + 1, p - 1, t);
    return a + b;
}

inline int linear_span(const evcal::KnotVector& kv, double t) {
    const int n = kv.last_index();
    if (t == kv.u[static_cast<std::size_t>(n + 1)]) return n;
    int k = kv.degree;
    for (int j = kv.degree; j <= n; ++j)
        if (kv.u[static_cast<std::size_t>(j)] <= t) k = j;
    return k;
}

}  // namespace oracle
