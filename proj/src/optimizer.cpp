#include "evcal/optimizer.hpp"

#include "evcal/parallel.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>

namespace evcal {

double event_depth(const Pose& pose, const Vec3& ray_cam) {
    const Vec3 w = pose.rotation * ray_cam;
    if (std::abs(w.z()) < 1e-12) throw DomainError("ray parallel to the pattern plane");
    return -pose.translation.z() / w.z();
}

double event_depth(const SplineSegment& seg, double t_us, const Vec2& pixel, const Intrinsics& k) {
    return event_depth(evaluate(seg, t_us), normalize(k, pixel));
}

bool event_residual(const EventCorrespondence& corr, const Intrinsics& k, const SplineSegment& seg,
                    double radius, double& residual, ResidualJacobian* jac) {
    IntrinsicsJacobian jk;
    const Vec3 ray = normalize(k, corr.pixel, jac ? &jk : nullptr, nullptr);
    const SplineSample s = sample(seg, corr.t_us);

    // Rotation of the unnormalized blend q = (u, sc): w = f(q) / |q|^2.
    const Vec3 u = s.quaternion_raw.head<3>();
    const double sc = s.quaternion_raw(3);
    const double n2 = s.quaternion_raw.squaredNorm();
    const Vec3 uxr = u.cross(ray);
    const Vec3 f = (sc * sc - u.squaredNorm()) * ray + 2.0 * u.dot(ray) * u + 2.0 * sc * uxr;
    const Vec3 w = f / n2;
    if (std::abs(w.z()) < 1e-12) return false;

    const Vec3& t = s.position;
    const double lambda = -t.z() / w.z();
    const Vec3 x = t + lambda * w;
    const Vec3 d = x - corr.center;
    const double dist = d.norm();
    residual = dist - radius;
    if (!jac) return true;

    const Vec3 nhat = dist > 1e-15 ? Vec3(d / dist) : Vec3::Zero();
    // n^T P with P = I - w e_z^T / w_z.
    Eigen::RowVector3d a = nhat.transpose();
    a(2) -= nhat.dot(w) / w.z();

    const Mat3 rot_hat = Quat(s.quaternion_raw(3), s.quaternion_raw(0), s.quaternion_raw(1), s.quaternion_raw(2))
                             .normalized()
                             .toRotationMatrix();
    jac->d_intrinsics = lambda * a * rot_hat * jk;

    Eigen::Matrix<double, 3, 4> df;
    df.leftCols<3>() = -2.0 * ray * u.transpose() + 2.0 * u.dot(ray) * Mat3::Identity() + 2.0 * u * ray.transpose() -
                       2.0 * sc * skew(ray);
    df.col(3) = 2.0 * sc * ray + 2.0 * uxr;
    const Eigen::Matrix<double, 3, 4> dw = (df - 2.0 * w * s.quaternion_raw.transpose()) / n2;
    const Eigen::RowVector4d dq = lambda * a * dw;

    jac->first_control = s.first;
    jac->control_count = s.count;
    for (int i = 0; i < s.count; ++i) {
        const double b = s.basis[static_cast<std::size_t>(i)];
        auto& row = jac->d_control[static_cast<std::size_t>(i)];
        row.head<3>() = b * a;
        row.tail<4>() = b * dq;
    }
    return true;
}

double huber_delta_from_residuals(std::vector<double> residuals) {
    if (residuals.empty()) throw PreconditionError("no residuals to estimate a Huber threshold");
    auto median = [](std::vector<double>& v) {
        const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
        std::nth_element(v.begin(), mid, v.end());
        return *mid;
    };
    const double med = median(residuals);
    for (auto& r : residuals) r = std::abs(r - med);
    const double mad = median(residuals);
    return 1.345 * 1.4826 * std::max(mad, 1e-12);
}

std::vector<EventCorrespondence> initial_correspondences(std::span<const ReferenceFrame> frames,
                                                         std::span<const int> frame_segment,
                                                         const PatternSpec& spec) {
    const auto board = board_points(spec);
    std::vector<EventCorrespondence> out;
    for (std::size_t j = 0; j < frames.size(); ++j) {
        if (frame_segment[j] < 0) continue;
        const auto& f = frames[j];
        for (std::size_t e = 0; e < f.window.events.size(); ++e) {
            const int c = f.event_circle[e];
            if (c < 0) continue;
            EventCorrespondence corr;
            corr.event_index = f.window.first_index + e;
            corr.t_us = static_cast<double>(f.window.events[e].t);
            corr.pixel = f.window.events[e].pixel();
            corr.segment = frame_segment[j];
            corr.circle = c;
            corr.center = board[static_cast<std::size_t>(c)];
            out.push_back(corr);
        }
    }
    return out;
}

std::vector<EventCorrespondence> augment_events(std::span<const ReferenceFrame> frames,
                                                std::span<const int> frame_segment,
                                                std::span<const SplineSegment> segments,
                                                std::span<const Event> stream, const PatternSpec& spec,
                                                const AugmentParams& params) {
    const auto board = board_points(spec);
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < frames.size(); ++j)
        if (frame_segment[j] >= 0) kept.push_back(j);
    std::vector<EventCorrespondence> out;
    if (kept.empty()) return out;

    std::vector<char> in_window(stream.size(), 0);
    std::vector<double> t_ref;
    for (std::size_t j : kept) {
        const auto& w = frames[j].window;
        std::fill_n(in_window.begin() + static_cast<std::ptrdiff_t>(w.first_index), w.events.size(), char{1});
        t_ref.push_back(frames[j].t_ref());
    }

    for (std::size_t e = 0; e < stream.size(); ++e) {
        if (in_window[e]) continue;
        const double t = static_cast<double>(stream[e].t);
        // Temporally nearest kept frame; the earlier one wins a tie.
        const auto it = std::lower_bound(t_ref.begin(), t_ref.end(), t);
        std::size_t pick = static_cast<std::size_t>(it - t_ref.begin());
        if (pick == t_ref.size() || (pick > 0 && t - t_ref[pick - 1] <= t_ref[pick] - t)) --pick;
        const auto& frame = frames[kept[pick]];
        const double dt = std::abs(t - t_ref[pick]);
        if (dt > params.dt_max_us) continue;
        if (params.window_factor > 0.0 && dt > params.window_factor * static_cast<double>(frame.window.duration())) continue;
        const int seg = frame_segment[kept[pick]];
        if (!segments[static_cast<std::size_t>(seg)].contains(t)) continue;

        const Vec2 m = stream[e].pixel();
        double best = std::numeric_limits<double>::infinity();
        int best_circle = -1;
        for (const auto& rf : frame.rectified) {
            const double gap = std::abs((m - rf.center).norm() - rf.radius);
            if (gap <= params.d_max_factor * rf.radius && (gap < best || (gap == best && rf.circle < best_circle))) {
                best = gap;
                best_circle = rf.circle;
            }
        }
        if (best_circle < 0) continue;
        EventCorrespondence corr;
        corr.event_index = e;
        corr.t_us = t;
        corr.pixel = m;
        corr.segment = seg;
        corr.circle = best_circle;
        corr.center = board[static_cast<std::size_t>(best_circle)];
        corr.augmented = true;
        out.push_back(corr);
    }
    return out;
}

std::vector<double> compute_residuals(std::span<const EventCorrespondence> correspondences, const Intrinsics& k,
                                      std::span<const SplineSegment> segments, double circle_radius,
                                      std::size_t* degenerate) {
    std::vector<double> out;
    out.reserve(correspondences.size());
    std::size_t skipped = 0;
    for (const auto& c : correspondences) {
        double r;
        if (event_residual(c, k, segments[static_cast<std::size_t>(c.segment)], circle_radius, r)) {
            out.push_back(r);
        } else {
            ++skipped;
        }
    }
    if (degenerate) *degenerate = skipped;
    return out;
}

namespace {

constexpr std::size_t kChunks = 32;
constexpr int kNk = Intrinsics::kSize;

struct Layout {
    std::vector<std::size_t> control_offset;  // first global control index per segment
    std::size_t spline_params = 0;
    int band = 0;  // 7 * (p + 1)
    int nk = 0;    // optimized intrinsic count (0 or 9)

    std::size_t size() const { return spline_params + static_cast<std::size_t>(nk); }
};

// Arrowhead normal equations: a banded spline block, a dense intrinsics
// block and their coupling. Only the upper triangle is stored.
struct Normal {
    std::vector<double> band;   // spline_params x band, entry (row, row + d)
    std::vector<double> cross;  // spline_params x nk, row-major
    Eigen::Matrix<double, kNk, kNk> kk = Eigen::Matrix<double, kNk, kNk>::Zero();
    Eigen::VectorXd g;
    double cost = 0.0;
    std::size_t used = 0;
    std::size_t degenerate = 0;

    void reset(const Layout& l, bool with_jacobian) {
        cost = 0.0;
        used = degenerate = 0;
        if (!with_jacobian) return;
        band.assign(l.spline_params * static_cast<std::size_t>(l.band), 0.0);
        cross.assign(l.spline_params * static_cast<std::size_t>(kNk), 0.0);
        kk.setZero();
        g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.size()));
    }

    void add(const Normal& o, bool with_jacobian) {
        cost += o.cost;
        used += o.used;
        degenerate += o.degenerate;
        if (!with_jacobian) return;
        for (std::size_t i = 0; i < band.size(); ++i) band[i] += o.band[i];
        for (std::size_t i = 0; i < cross.size(); ++i) cross[i] += o.cross[i];
        kk += o.kk;
        g += o.g;
    }
};

struct State {
    Intrinsics k;
    std::vector<SplineSegment> segments;
};

void accumulate(std::span<const EventCorrespondence> corr, const State& state, double radius, const HuberLoss& loss,
                const Layout& layout, int threads, bool with_jacobian, Normal& total) {
    std::vector<Normal> parts(kChunks);
    parallel_chunks(kChunks, threads, [&](std::size_t chunk) {
        Normal& out = parts[chunk];
        out.reset(layout, with_jacobian);
        const auto [begin, end] = chunk_range(corr.size(), kChunks, chunk);
        ResidualJacobian jac;
        std::array<double, 7 * (kMaxSplineDegree + 1)> js{};
        for (std::size_t i = begin; i < end; ++i) {
            const auto& c = corr[i];
            double r;
            const auto& seg = state.segments[static_cast<std::size_t>(c.segment)];
            if (!event_residual(c, state.k, seg, radius, r, with_jacobian ? &jac : nullptr)) {
                ++out.degenerate;
                continue;
            }
            ++out.used;
            const double s = r * r;
            out.cost += loss.rho(s);
            if (!with_jacobian) continue;
            const double w = loss.weight(s);
            const int nsp = 7 * jac.control_count;
            for (int a = 0; a < jac.control_count; ++a)
                for (int b = 0; b < 7; ++b) js[static_cast<std::size_t>(7 * a + b)] = jac.d_control[static_cast<std::size_t>(a)](b);
            const std::size_t base =
                7 * (layout.control_offset[static_cast<std::size_t>(c.segment)] + static_cast<std::size_t>(jac.first_control));
            const auto bw = static_cast<std::size_t>(layout.band);
            for (int a = 0; a < nsp; ++a) {
                const double wa = w * js[static_cast<std::size_t>(a)];
                double* row = &out.band[(base + static_cast<std::size_t>(a)) * bw];
                for (int b = a; b < nsp; ++b) row[b - a] += wa * js[static_cast<std::size_t>(b)];
                out.g(static_cast<Eigen::Index>(base) + a) += wa * r;
                if (layout.nk) {
                    double* cr = &out.cross[(base + static_cast<std::size_t>(a)) * kNk];
                    for (int q = 0; q < kNk; ++q) cr[q] += wa * jac.d_intrinsics(q);
                }
            }
            if (layout.nk) {
                out.kk.noalias() += w * jac.d_intrinsics.transpose() * jac.d_intrinsics;
                out.g.tail<kNk>() += w * r * jac.d_intrinsics.transpose();
            }
        }
    });
    total.reset(layout, with_jacobian);
    for (const auto& p : parts) total.add(p, with_jacobian);
}

// Global quaternion scale per segment is a gauge freedom; fix it at unit mean norm.
void normalize_gauge(std::vector<SplineSegment>& segments) {
    for (auto& seg : segments) {
        double sum = 0.0;
        for (const auto& c : seg.control_points) sum += c.tail<4>().norm();
        const double scale = static_cast<double>(seg.control_points.size()) / sum;
        if (std::isfinite(scale) && scale > 0.0)
            for (auto& c : seg.control_points) c.tail<4>() *= scale;
    }
}

}  // namespace

SolveResult solve(std::span<const EventCorrespondence> correspondences, const Intrinsics& initial,
                  std::vector<SplineSegment> segments, double circle_radius, const SolverOptions& options) {
    if (segments.empty()) throw PreconditionError("no segments to optimize");
    Layout layout;
    int max_degree = 1;
    std::size_t controls = 0;
    for (const auto& seg : segments) {
        if (seg.knots.control_count() < seg.knots.degree + 1 ||
            static_cast<int>(seg.control_points.size()) != seg.knots.control_count()) {
            throw PreconditionError("segment control points do not match its knots");
        }
        layout.control_offset.push_back(controls);
        controls += seg.control_points.size();
        max_degree = std::max(max_degree, seg.knots.degree);
    }
    layout.spline_params = 7 * controls;
    layout.band = 7 * (max_degree + 1);
    layout.nk = options.optimize_intrinsics ? kNk : 0;
    const auto n = static_cast<Eigen::Index>(layout.size());

    check_validity(initial, options.sensor);
    State state{initial, std::move(segments)};
    normalize_gauge(state.segments);

    SolveResult result;
    SolverReport& report = result.report;
    report.residual_count = correspondences.size();

    HuberLoss loss;
    if (options.huber_delta > 0.0) {
        loss.delta = options.huber_delta;
    } else {
        loss.delta = huber_delta_from_residuals(
            compute_residuals(correspondences, state.k, state.segments, circle_radius));
    }
    report.huber_delta = loss.delta;

    Normal normal;
    accumulate(correspondences, state, circle_radius, loss, layout, options.threads, true, normal);
    if (!std::isfinite(normal.cost)) throw ValidationError("non-finite cost at the initial state");
    report.initial_cost = normal.cost;
    double cost = normal.cost;
    double mu = options.initial_mu;
    double nu = 2.0;
    int rejections = 0;
    report.termination = "max_iterations";

    using SpMat = Eigen::SparseMatrix<double>;
    std::vector<Eigen::Triplet<double>> triplets;
    for (int it = 1; it <= options.max_iterations; ++it) {
        report.iterations = it;
        if (normal.g.cwiseAbs().maxCoeff() <= options.gradient_tolerance) {
            report.converged = true;
            report.termination = "gradient_tolerance";
            break;
        }

        // Damped system (H + mu * D) delta = -g with D = diag(H), floored.
        const auto bw = static_cast<std::size_t>(layout.band);
        Eigen::VectorXd diag(n);
        for (std::size_t r = 0; r < layout.spline_params; ++r) diag(static_cast<Eigen::Index>(r)) = normal.band[r * bw];
        for (int q = 0; q < layout.nk; ++q) diag(static_cast<Eigen::Index>(layout.spline_params) + q) = normal.kk(q, q);
        const double floor = std::max(1e-12, 1e-12 * diag.maxCoeff());
        const Eigen::VectorXd damp = diag.cwiseMax(floor);

        triplets.clear();
        for (std::size_t r = 0; r < layout.spline_params; ++r) {
            for (std::size_t d = 0; d < bw && r + d < layout.spline_params; ++d) {
                double v = normal.band[r * bw + d];
                if (d == 0) v += mu * damp(static_cast<Eigen::Index>(r));
                if (v != 0.0) triplets.emplace_back(static_cast<int>(r), static_cast<int>(r + d), v);
            }
            for (int q = 0; q < layout.nk; ++q) {
                const double v = normal.cross[r * kNk + static_cast<std::size_t>(q)];
                if (v != 0.0) triplets.emplace_back(static_cast<int>(r), static_cast<int>(layout.spline_params) + q, v);
            }
        }
        for (int a = 0; a < layout.nk; ++a)
            for (int b = a; b < layout.nk; ++b) {
                double v = normal.kk(a, b);
                if (a == b) v += mu * damp(static_cast<Eigen::Index>(layout.spline_params) + a);
                triplets.emplace_back(static_cast<int>(layout.spline_params) + a,
                                      static_cast<int>(layout.spline_params) + b, v);
            }
        SpMat lhs(n, n);
        lhs.setFromTriplets(triplets.begin(), triplets.end());
        Eigen::SimplicialLDLT<SpMat, Eigen::Upper, Eigen::NaturalOrdering<int>> ldlt(lhs);
        Eigen::VectorXd delta;
        bool ok = ldlt.info() == Eigen::Success;
        if (ok) {
            delta = ldlt.solve(-normal.g);
            ok = ldlt.info() == Eigen::Success && delta.allFinite();
        }

        auto apply = [&](const Eigen::VectorXd& step) {
            State out = state;
            std::size_t p = 0;
            for (auto& seg : out.segments)
                for (auto& c : seg.control_points) {
                    c += step.segment<7>(static_cast<Eigen::Index>(p));
                    p += 7;
                }
            if (layout.nk) {
                auto arr = out.k.to_array();
                for (int q = 0; q < kNk; ++q) arr[static_cast<std::size_t>(q)] += step(static_cast<Eigen::Index>(p) + q);
                out.k = Intrinsics::from_array(arr);
            }
            return out;
        };
        State trial;
        double trial_cost = std::numeric_limits<double>::infinity();
        if (ok) {
            trial = apply(delta);
            if (is_valid(trial.k, options.sensor)) {
                try {
                    Normal probe;
                    accumulate(correspondences, trial, circle_radius, loss, layout, options.threads, false, probe);
                    trial_cost = probe.cost;
                } catch (const DomainError&) {
                    trial_cost = std::numeric_limits<double>::infinity();
                }
            }
        }

        const double predicted = ok ? mu * delta.dot(damp.cwiseProduct(delta)) - normal.g.dot(delta) : 0.0;
        if (ok && predicted >= 0.0 && predicted <= options.function_tolerance * cost) {
            // The quadratic model promises no meaningful decrease.
            report.history.push_back({it, cost, mu, false});
            report.converged = true;
            report.termination = "function_tolerance";
            break;
        }
        const bool accepted = std::isfinite(trial_cost) && trial_cost < cost;
        report.history.push_back({it, accepted ? trial_cost : cost, mu, accepted});
        if (!accepted) {
            mu *= nu;
            nu *= 2.0;
            if (++rejections >= options.max_consecutive_rejections) {
                report.termination = "max_consecutive_rejections";
                break;
            }
            continue;
        }

        const double gain = predicted > 0.0 ? (cost - trial_cost) / predicted : 0.0;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * gain - 1.0, 3));
        mu = std::max(mu, 1e-15);
        nu = 2.0;
        rejections = 0;

        double state_norm = 0.0;
        for (const auto& seg : state.segments)
            for (const auto& c : seg.control_points) state_norm += c.squaredNorm();
        for (double v : state.k.to_array()) state_norm += v * v;
        const double rel_decrease = (cost - trial_cost) / std::max(cost, 1e-300);

        state = std::move(trial);
        normalize_gauge(state.segments);
        cost = trial_cost;
        accumulate(correspondences, state, circle_radius, loss, layout, options.threads, true, normal);

        if (rel_decrease < options.function_tolerance) {
            report.converged = true;
            report.termination = "function_tolerance";
            break;
        }
        if (delta.norm() <= options.step_tolerance * (std::sqrt(state_norm) + options.step_tolerance)) {
            report.converged = true;
            report.termination = "step_tolerance";
            break;
        }
    }
    report.final_cost = cost;
    report.degenerate_count = normal.degenerate;
    result.intrinsics = state.k;
    result.segments = std::move(state.segments);
    return result;
}

}  // namespace evcal
