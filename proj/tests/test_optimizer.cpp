#include <doctest.h>

#include "helpers.hpp"

#include <evcal/optimizer.hpp>
#include <evcal/synthetic.hpp>

#include <random>

using namespace evcal;

namespace {

struct Problem {
    Intrinsics k;
    std::vector<SplineSegment> segments;
    std::vector<EventCorrespondence> corr;
    double radius = 0.01;
};

// Exact event observations on the circle rims along a ground-truth spline.
Problem make_problem(double duration_s, int events, std::uint64_t seed) {
    SyntheticScene scene = default_scene();
    scene.duration_s = duration_s;
    Problem p;
    p.k = scene.intrinsics_gt;
    p.segments = ground_truth_trajectory(scene);
    p.radius = scene.pattern.circle_radius;
    const auto board = board_points(scene.pattern);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(p.segments[0].t_begin(), p.segments[0].t_end());
    std::uniform_real_distribution<double> ua(0.0, 2 * M_PI);
    std::uniform_int_distribution<int> us(0, scene.pattern.size() - 1);
    while (static_cast<int>(p.corr.size()) < events) {
        EventCorrespondence c;
        c.t_us = ut(rng);
        c.circle = us(rng);
        c.center = board[static_cast<std::size_t>(c.circle)];
        const double a = ua(rng);
        const Vec3 rim = c.center + p.radius * Vec3(std::cos(a), std::sin(a), 0.0);
        const Vec3 xc = evaluate(p.segments[0], c.t_us).to_camera(rim);
        c.pixel = project(p.k, xc);
        if (!scene.sensor.contains(c.pixel.x(), c.pixel.y())) continue;
        c.event_index = p.corr.size();
        p.corr.push_back(c);
    }
    return p;
}

double residual_of(const EventCorrespondence& c, const Intrinsics& k, const SplineSegment& seg, double radius) {
    double r = 0.0;
    REQUIRE(event_residual(c, k, seg, radius, r));
    return r;
}

}  // namespace

TEST_CASE("residual is zero on exact observations and the plane point has z = 0") {
    const auto p = make_problem(1.0, 500, 1);
    double worst_r = 0.0, worst_z = 0.0;
    for (const auto& c : p.corr) {
        worst_r = std::max(worst_r, std::abs(residual_of(c, p.k, p.segments[0], p.radius)));
        const Pose pose = evaluate(p.segments[0], c.t_us);
        const Vec3 ray = normalize(p.k, c.pixel);
        const double lambda = event_depth(pose, ray);
        const Vec3 x = pose.translation + lambda * (pose.rotation * ray);
        worst_z = std::max(worst_z, std::abs(x.z()));
        CHECK(lambda > 0.0);
        CHECK(event_depth(p.segments[0], c.t_us, c.pixel, p.k) == doctest::Approx(lambda));
    }
    CHECK(worst_r < 1e-9);
    CHECK(worst_z <= 1e-10);
}

TEST_CASE("event depth rejects rays parallel to the plane") {
    Pose pose;
    pose.rotation = rotation_from_vector(Vec3(M_PI / 2, 0, 0));  // camera z axis along -y world
    pose.translation = Vec3(0, 0, -1);
    CHECK_THROWS_AS(event_depth(pose, Vec3(0, 0, 1)), DomainError);
}

TEST_CASE("residual Jacobians match central differences") {
    auto p = make_problem(1.0, 1000, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    // Evaluate away from the exact solution so the distance term is generic.
    Intrinsics k = p.k;
    k.fx += 4.0;
    k.cy -= 2.0;
    k.k = {0.3, 0.02, -0.01, 0.0, 0.0};
    SplineSegment seg = p.segments[0];
    for (auto& cp : seg.control_points) {
        cp.head<3>() += 0.003 * Vec3(g(rng), g(rng), g(rng));
        cp.tail<4>() *= 1.0 + 0.1 * g(rng);
    }
    double worst = 0.0;
    for (const auto& c : p.corr) {
        double r;
        ResidualJacobian jac;
        REQUIRE(event_residual(c, k, seg, p.radius, r, &jac));
        std::vector<double> analytic, numeric;
        const auto params = k.to_array();
        for (int i = 0; i < Intrinsics::kSize; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(params[static_cast<std::size_t>(i)]));
            auto a = params, b = params;
            a[static_cast<std::size_t>(i)] += h;
            b[static_cast<std::size_t>(i)] -= h;
            analytic.push_back(jac.d_intrinsics(i));
            numeric.push_back((residual_of(c, Intrinsics::from_array(a), seg, p.radius) -
                               residual_of(c, Intrinsics::from_array(b), seg, p.radius)) /
                              (2 * h));
        }
        for (int j = 0; j < jac.control_count; ++j) {
            for (int d = 0; d < 7; ++d) {
                const double h = 1e-7;
                SplineSegment sa = seg, sb = seg;
                sa.control_points[static_cast<std::size_t>(jac.first_control + j)](d) += h;
                sb.control_points[static_cast<std::size_t>(jac.first_control + j)](d) -= h;
                analytic.push_back(jac.d_control[static_cast<std::size_t>(j)](d));
                numeric.push_back((residual_of(c, k, sa, p.radius) - residual_of(c, k, sb, p.radius)) / (2 * h));
            }
        }
        const Eigen::Map<const Eigen::VectorXd> va(analytic.data(), static_cast<Eigen::Index>(analytic.size()));
        const Eigen::Map<const Eigen::VectorXd> vn(numeric.data(), static_cast<Eigen::Index>(numeric.size()));
        worst = std::max(worst, (va - vn).norm() / vn.norm());
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("huber loss is C1 at the knee") {
    const HuberLoss h{0.5};
    const double knee = h.delta * h.delta;
    const double eps = 1e-9;
    CHECK(h.rho(knee - eps) == doctest::Approx(h.rho(knee + eps)).epsilon(1e-8));
    CHECK(h.weight(knee - eps) == doctest::Approx(h.weight(knee + eps)).epsilon(1e-6));
    CHECK(h.weight(knee) == 1.0);
    // One-sided numerical derivatives of rho agree at the knee.
    const double step = 1e-6;
    const double left = (h.rho(knee) - h.rho(knee - step)) / step;
    const double right = (h.rho(knee + step) - h.rho(knee)) / step;
    CHECK(left == doctest::Approx(right).epsilon(1e-5));
    CHECK(h.rho(0.01) == 0.01);
    CHECK(h.rho(4.0) == doctest::Approx(2 * 0.5 * 2.0 - 0.25));
    CHECK(h.weight(4.0) == doctest::Approx(0.25));
}

TEST_CASE("huber threshold from residuals") {
    const std::vector<double> r{-2.0, -1.0, 0.0, 1.0, 2.0};
    // median 0, |r| median 1
    CHECK(huber_delta_from_residuals(r) == doctest::Approx(1.345 * 1.4826));
    CHECK_THROWS_AS(huber_delta_from_residuals({}), PreconditionError);
    CHECK(huber_delta_from_residuals({3.0, 3.0, 3.0}) > 0.0);
}

TEST_CASE("augmentation assigns out-of-window events to the nearest frame") {
    const PatternSpec spec;
    std::vector<ReferenceFrame> frames(2);
    std::vector<Event> stream;
    for (std::int64_t t = 0; t <= 200'000; t += 1000) stream.push_back({t, 100, 50, 1});
    // Frame windows [20 ms, 40 ms] and [120 ms, 140 ms].
    for (int j = 0; j < 2; ++j) {
        auto& w = frames[static_cast<std::size_t>(j)].window;
        w.t_start = 20'000 + 100'000 * j;
        w.t_end = w.t_start + 20'000;
        w.first_index = static_cast<std::size_t>(w.t_start / 1000);
        w.events.assign(stream.begin() + static_cast<std::ptrdiff_t>(w.first_index),
                        stream.begin() + static_cast<std::ptrdiff_t>(w.first_index + 21));
    }
    // Circle 4 rim passes through (100, 50); circle 5 is further away.
    frames[0].rectified = {{4, Vec2(90, 50), 10.0, Vec2(90, 50), 10.0}, {5, Vec2(200, 50), 10.0, Vec2(200, 50), 10.0}};
    frames[1].rectified = {{5, Vec2(110, 50), 10.0, Vec2(110, 50), 10.0}, {4, Vec2(90, 50), 10.0, Vec2(90, 50), 10.0}};
    SplineSegment seg;
    seg.knots.degree = 1;
    seg.knots.u = {10'000, 10'000, 150'000, 150'000};
    seg.control_points.assign(2, Vec7::Zero());
    const std::vector<SplineSegment> segments{seg};
    const std::vector<int> frame_segment{0, 0};
    AugmentParams params;
    params.dt_max_us = 30'000;
    params.window_factor = 0.0;
    const auto out = augment_events(frames, frame_segment, segments, stream, spec, params);
    for (const auto& c : out) {
        CHECK(c.augmented);
        CHECK(c.segment == 0);
        CHECK(stream[c.event_index].t == static_cast<std::int64_t>(c.t_us));
        // Outside every window, inside the segment span and within dt_max of the chosen t_ref.
        const bool in_a = c.t_us >= 20'000 && c.t_us <= 40'000;
        const bool in_b = c.t_us >= 120'000 && c.t_us <= 140'000;
        CHECK_FALSE(in_a);
        CHECK_FALSE(in_b);
        CHECK(c.t_us >= 10'000);
        CHECK(c.t_us <= 150'000);
        const double to_a = std::abs(c.t_us - 30'000), to_b = std::abs(c.t_us - 130'000);
        CHECK(std::min(to_a, to_b) <= 30'000);
        // Equal perimeter gap (0) for both circles of frame 1: lower index wins.
        CHECK(c.circle == 4);
        CHECK(c.center == board_points(spec)[4]);
    }
    // [10,20) u [41,60] near frame 0, [100,120) u [141,150] near frame 1.
    CHECK(out.size() == 10 + 20 + 20 + 10);

    params.window_factor = 0.75;  // dt <= 15 ms
    const auto tight = augment_events(frames, frame_segment, segments, stream, spec, params);
    for (const auto& c : tight) CHECK(std::min(std::abs(c.t_us - 30'000), std::abs(c.t_us - 130'000)) <= 15'000);
    CHECK(tight.size() == 20);
}

TEST_CASE("joint solve recovers perturbed intrinsics and trajectory") {
    const auto p = make_problem(2.0, 6000, 5);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    Intrinsics start = p.k;
    // A start of the quality the linear initialization delivers.
    start.fx = 337.0;
    start.fy = 342.0;
    start.cx = 174.5;
    start.cy = 129.0;
    start.k[0] = 0.33;
    std::vector<SplineSegment> segs = p.segments;
    for (auto& cp : segs[0].control_points) cp.head<3>() += 0.001 * Vec3(g(rng), g(rng), g(rng));

    SolverOptions options;
    options.threads = 1;
    const auto res = solve(p.corr, start, segs, p.radius, options);
    CHECK(res.report.converged);
    CHECK(res.report.final_cost < 1e-3 * res.report.initial_cost);
    CHECK(res.intrinsics.fx == doctest::Approx(p.k.fx).epsilon(1e-4));
    CHECK(res.intrinsics.fy == doctest::Approx(p.k.fy).epsilon(1e-4));
    CHECK(std::abs(res.intrinsics.cx - p.k.cx) < 0.05);
    CHECK(std::abs(res.intrinsics.cy - p.k.cy) < 0.05);
    CHECK(std::abs(res.intrinsics.k[0] - p.k.k[0]) < 2e-3);
    for (double t = p.segments[0].t_begin(); t <= p.segments[0].t_end(); t += 50'000) {
        CHECK((evaluate(res.segments[0], t).translation - evaluate(p.segments[0], t).translation).norm() < 5e-4);
    }
    // The quaternion gauge is fixed to a unit mean control norm.
    double mean_norm = 0.0;
    for (const auto& cp : res.segments[0].control_points) mean_norm += cp.tail<4>().norm();
    CHECK(mean_norm / static_cast<double>(res.segments[0].control_points.size()) == doctest::Approx(1.0));

    SolverOptions threaded = options;
    threaded.threads = 3;
    const auto res3 = solve(p.corr, start, segs, p.radius, threaded);
    CHECK(res3.intrinsics.to_array() == res.intrinsics.to_array());
    CHECK(res3.report.iterations == res.report.iterations);
    CHECK(res3.segments[0].control_points == res.segments[0].control_points);
}

TEST_CASE("solve with fixed intrinsics leaves them untouched") {
    const auto p = make_problem(1.0, 1500, 7);
    SolverOptions options;
    options.optimize_intrinsics = false;
    options.max_iterations = 5;
    const auto res = solve(p.corr, p.k, p.segments, p.radius, options);
    CHECK(res.intrinsics.to_array() == p.k.to_array());
    CHECK(res.report.residual_count == p.corr.size());
}

TEST_CASE("solve from the exact state stops at once") {
    const auto p = make_problem(1.0, 1500, 8);
    const auto res = solve(p.corr, p.k, p.segments, p.radius, SolverOptions{});
    CHECK(res.report.converged);
    CHECK(res.report.iterations <= 2);
    CHECK(res.report.final_cost < 1e-20);
}

// Outliers replacing 10% of the correspondences, with a Huber threshold of
// 1.5 sigma of the clean residuals.
TEST_CASE("clutter degrades pinhole recovery by less than 3x") {
    auto p = make_problem(2.0, 6000, 1);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& c : p.corr) c.pixel += Vec2(g(rng), g(rng));
    auto cluttered = p.corr;
    std::uniform_real_distribution<double> ux(0.0, 345.0), uy(0.0, 259.0);
    for (std::size_t i = 0; i < cluttered.size(); i += 10) cluttered[i].pixel = Vec2(ux(rng), uy(rng));

    Intrinsics start = p.k;
    start.fx = 337.0;
    start.fy = 342.0;
    start.cx = 174.5;
    start.cy = 129.0;
    start.k[0] = 0.33;
    auto pinhole_error = [&](const Intrinsics& k) {
        return std::abs(k.fx - p.k.fx) + std::abs(k.fy - p.k.fy) + std::abs(k.cx - p.k.cx) + std::abs(k.cy - p.k.cy);
    };
    const auto clean = solve(p.corr, start, p.segments, p.radius, SolverOptions{});
    const auto residuals = compute_residuals(p.corr, clean.intrinsics, clean.segments, p.radius);
    double sum = 0.0;
    for (double r : residuals) sum += r * r;
    SolverOptions robust;
    robust.huber_delta = 1.5 * std::sqrt(sum / static_cast<double>(residuals.size()));
    const auto noisy = solve(cluttered, start, p.segments, p.radius, robust);
    CAPTURE(pinhole_error(clean.intrinsics));
    CAPTURE(pinhole_error(noisy.intrinsics));
    CHECK(pinhole_error(noisy.intrinsics) < 3.0 * pinhole_error(clean.intrinsics));
}
