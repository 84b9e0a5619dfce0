#include "evcal/spline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace evcal {

void KnotVector::validate() const {
    const auto p = static_cast<std::size_t>(degree);
    if (degree < 1 || degree > kMaxSplineDegree) throw DomainError("unsupported spline degree");
    if (u.size() < 2 * p + 2) throw DomainError("knot vector too short");
    if (!std::is_sorted(u.begin(), u.end())) throw DomainError("knots must be non-decreasing");
    if (!(u.back() > u.front())) throw DomainError("empty knot domain");
    for (std::size_t i = 0; i <= p; ++i) {
        if (u[i] != u.front() || u[u.size() - 1 - i] != u.back()) throw DomainError("knot vector is not clamped");
    }
    for (std::size_t i = p + 1; i + p + 1 < u.size(); ++i) {
        if (!(u[i] > u.front() && u[i] < u.back())) throw DomainError("interior knot on the domain boundary");
    }
}

int find_span(const KnotVector& knots, double t) {
    const int n = knots.last_index();
    const int p = knots.degree;
    const auto& u = knots.u;
    if (!(t >= u[static_cast<std::size_t>(p)] && t <= u[static_cast<std::size_t>(n + 1)])) {
        throw DomainError("parameter outside the knot domain");
    }
    if (t == u[static_cast<std::size_t>(n + 1)]) return n;
    // Last index k in [p, n] with u_k <= t.
    const auto first = u.begin() + p;
    const auto last = u.begin() + n + 1;
    return static_cast<int>(std::upper_bound(first, last, t) - u.begin()) - 1;
}

void basis_funs(int span, double t, const KnotVector& knots, std::span<double> out) {
    const int p = knots.degree;
    const auto& u = knots.u;
    // Clamped ends interpolate the end control points exactly.
    if (t == u.front() || t == u.back()) {
        std::fill(out.begin(), out.begin() + p + 1, 0.0);
        out[t == u.front() ? 0 : static_cast<std::size_t>(p)] = 1.0;
        return;
    }
    std::array<double, kMaxSplineDegree + 1> left{}, right{};
    out[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[static_cast<std::size_t>(j)] = t - u[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
            const double temp = out[static_cast<std::size_t>(r)] / denom;
            out[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        out[static_cast<std::size_t>(j)] = saved;
    }
}

std::vector<double> basis_funs(int span, double t, const KnotVector& knots) {
    std::vector<double> out(static_cast<std::size_t>(knots.degree + 1));
    basis_funs(span, t, knots, out);
    return out;
}

SplineSample sample(const SplineSegment& seg, double t) {
    if (!seg.contains(t)) throw DomainError("time outside the segment span");
    SplineSample s;
    const int p = seg.knots.degree;
    const int span = find_span(seg.knots, t);
    s.first = span - p;
    s.count = p + 1;
    basis_funs(span, t, seg.knots, std::span<double>(s.basis.data(), static_cast<std::size_t>(p + 1)));
    for (int i = 0; i <= p; ++i) {
        const Vec7& c = seg.control_points[static_cast<std::size_t>(s.first + i)];
        const double b = s.basis[static_cast<std::size_t>(i)];
        s.position += b * c.head<3>();
        s.quaternion_raw += b * c.tail<4>();
    }
    if (s.quaternion_raw.norm() < 1e-9) throw DomainError("degenerate quaternion blend");
    return s;
}

Pose evaluate(const SplineSegment& seg, double t) {
    const SplineSample s = sample(seg, t);
    const Vec4 q = s.quaternion_raw.normalized();
    return Pose{Quat(q(3), q(0), q(1), q(2)).toRotationMatrix(), s.position};
}

Vec7 pose_to_vector(const Pose& pose) {
    Vec7 v;
    v.head<3>() = pose.translation;
    v.tail<4>() = pose.quaternion().coeffs();
    return v;
}

std::vector<std::pair<std::size_t, std::size_t>> group_segments(std::span<const double> t_us, double max_gap_us,
                                                                std::size_t min_frames) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= t_us.size(); ++i) {
        if (i == t_us.size() || t_us[i] - t_us[i - 1] > max_gap_us) {
            if (i - start >= min_frames) out.emplace_back(start, i - 1);
            start = i;
        }
    }
    if (out.empty()) throw InfeasibleError("no trajectory segment has enough reference frames");
    return out;
}

std::vector<Quat> hemisphere_align(std::span<const Quat> quaternions) {
    std::vector<Quat> out(quaternions.begin(), quaternions.end());
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].coeffs().dot(out[i - 1].coeffs()) < 0.0) out[i].coeffs() = -out[i].coeffs();
    }
    return out;
}

KnotVector approximation_knots(std::span<const double> params, int degree, int n_ctrl) {
    const int m = static_cast<int>(params.size()) - 1;
    const int n = n_ctrl - 1;
    const int p = degree;
    if (n < p || n > m) throw PreconditionError("control point count must lie in [p + 1, sample count]");
    KnotVector kv;
    kv.degree = p;
    kv.u.assign(static_cast<std::size_t>(n + p + 2), 0.0);
    for (int i = 0; i <= p; ++i) {
        kv.u[static_cast<std::size_t>(i)] = params.front();
        kv.u[static_cast<std::size_t>(n + 1 + i)] = params.back();
    }
    // Averaging rule over n + 1 parameters resampled at fractional sample
    // indices i * m / n; with n == m these are the samples themselves.
    std::vector<double> v(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) {
        const double x = static_cast<double>(i) * m / n;
        const auto lo = std::min(static_cast<int>(x), m - 1);
        const double a = x - lo;
        v[static_cast<std::size_t>(i)] =
            (1.0 - a) * params[static_cast<std::size_t>(lo)] + a * params[static_cast<std::size_t>(lo + 1)];
    }
    for (int j = 1; j <= n - p; ++j) {
        double sum = 0.0;
        for (int i = j; i < j + p; ++i) sum += v[static_cast<std::size_t>(i)];
        kv.u[static_cast<std::size_t>(j + p)] = sum / p;
    }
    return kv;
}

SplineSegment approximate_segment(std::span<const double> t_us, std::span<const Vec7> samples, int degree,
                                  int n_ctrl) {
    if (t_us.size() != samples.size() || t_us.size() < 2) throw PreconditionError("need at least two samples");
    if (!std::is_sorted(t_us.begin(), t_us.end()) || !(t_us.back() > t_us.front())) {
        throw PreconditionError("samples must be time-ordered with a non-empty span");
    }
    SplineSegment seg;
    seg.knots = approximation_knots(t_us, degree, n_ctrl);
    seg.knots.validate();
    const int m = static_cast<int>(t_us.size()) - 1;
    const int n = n_ctrl - 1;
    const int p = degree;
    seg.control_points.assign(static_cast<std::size_t>(n + 1), Vec7::Zero());
    seg.control_points.front() = samples.front();
    seg.control_points.back() = samples.back();
    if (n < 2) return seg;

    // Rows: interior samples; columns: interior control points.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m - 1, n - 1);
    Eigen::MatrixXd rhs(m - 1, 7);
    std::array<double, kMaxSplineDegree + 1> basis{};
    for (int k = 1; k < m; ++k) {
        const double t = t_us[static_cast<std::size_t>(k)];
        const int span = find_span(seg.knots, t);
        basis_funs(span, t, seg.knots, std::span<double>(basis.data(), static_cast<std::size_t>(p + 1)));
        Vec7 r = samples[static_cast<std::size_t>(k)];
        for (int i = 0; i <= p; ++i) {
            const int col = span - p + i;
            const double b = basis[static_cast<std::size_t>(i)];
            if (col == 0) {
                r -= b * samples.front();
            } else if (col == n) {
                r -= b * samples.back();
            } else {
                a(k - 1, col - 1) = b;
            }
        }
        rhs.row(k - 1) = r.transpose();
    }
    const Eigen::MatrixXd ata = a.transpose() * a;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(ata);
    const auto& sv = svd.singularValues();
    const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
    if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) throw ConditioningError("spline approximation is rank deficient", cond);
    const Eigen::MatrixXd x = ata.ldlt().solve(a.transpose() * rhs);
    for (int i = 1; i < n; ++i) seg.control_points[static_cast<std::size_t>(i)] = x.row(i - 1).transpose();
    return seg;
}

double approximation_residual(const SplineSegment& seg, std::span<const double> t_us, std::span<const Vec7> samples) {
    double sum = 0.0;
    for (std::size_t k = 0; k < t_us.size(); ++k) {
        const SplineSample s = sample(seg, t_us[k]);
        Vec7 v;
        v << s.position, s.quaternion_raw;
        sum += (v - samples[k]).squaredNorm();
    }
    return sum;
}

}  // namespace evcal
