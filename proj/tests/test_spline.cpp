#include <doctest.h>

#include "oracles.hpp"

#include <evcal/spline.hpp>

#include <random>

using namespace evcal;

namespace {

KnotVector random_knots(std::mt19937_64& rng, int p, int n_ctrl, bool repeated) {
    std::uniform_real_distribution<double> u(0.0, 1e6);
    std::vector<double> inner;
    for (int i = 0; i < n_ctrl - p - 1; ++i) inner.push_back(std::round(u(rng)));
    if (repeated && inner.size() >= 2) inner[1] = inner[0];
    std::sort(inner.begin(), inner.end());
    KnotVector kv;
    kv.degree = p;
    kv.u.assign(static_cast<std::size_t>(p + 1), -1.0);
    kv.u.insert(kv.u.end(), inner.begin(), inner.end());
    kv.u.insert(kv.u.end(), static_cast<std::size_t>(p + 1), 1e6 + 1.0);
    return kv;
}

Vec7 random_control(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec7 c;
    for (int i = 0; i < 3; ++i) c(i) = g(rng);
    c.tail<4>() = Vec4(0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng), 1.0);
    return c;
}

}  // namespace

TEST_CASE("find_span equals a linear scan") {
    std::mt19937_64 rng(1);
    for (int q = 0; q < 10000; ++q) {
        const int p = 1 + q % 5;
        const auto kv = random_knots(rng, p, p + 1 + static_cast<int>(rng() % 12), q % 3 == 0);
        std::uniform_real_distribution<double> ut(kv.front(), kv.back());
        double t = ut(rng);
        if (q % 7 == 0) t = kv.u[static_cast<std::size_t>(p + rng() % static_cast<std::size_t>(kv.last_index() - p + 2))];
        REQUIRE(find_span(kv, t) == oracle::linear_span(kv, t));
    }
}

TEST_CASE("find_span rejects parameters outside the domain") {
    KnotVector kv;
    kv.degree = 2;
    kv.u = {0, 0, 0, 1, 2, 2, 2};
    CHECK_THROWS_AS(find_span(kv, -0.1), DomainError);
    CHECK_THROWS_AS(find_span(kv, 2.1), DomainError);
    CHECK(find_span(kv, 2.0) == 3);
    CHECK(find_span(kv, 1.0) == 3);
    CHECK(find_span(kv, 0.0) == 2);
}

TEST_CASE("basis functions match the recursive definition and sum to one") {
    std::mt19937_64 rng(2);
    double worst_unity = 0.0;
    for (int q = 0; q < 1000; ++q) {
        const int p = 1 + q % 5;
        const auto kv = random_knots(rng, p, p + 1 + static_cast<int>(rng() % 10), q % 4 == 0);
        std::uniform_real_distribution<double> ut(kv.front(), kv.back());
        const double t = ut(rng);
        const int span = find_span(kv, t);
        const auto b = basis_funs(span, t, kv);
        double sum = 0.0;
        for (int i = 0; i <= p; ++i) {
            sum += b[static_cast<std::size_t>(i)];
            CHECK(b[static_cast<std::size_t>(i)] >= 0.0);
            CHECK(std::abs(b[static_cast<std::size_t>(i)] - oracle::cox_de_boor(kv.u, span - p + i, p, t)) < 1e-12);
        }
        worst_unity = std::max(worst_unity, std::abs(sum - 1.0));
    }
    CHECK(worst_unity <= 1e-12);
}

TEST_CASE("clamped splines interpolate their end control points exactly") {
    std::mt19937_64 rng(3);
    for (int q = 0; q < 100; ++q) {
        const int p = 1 + q % 5;
        SplineSegment seg;
        seg.knots = random_knots(rng, p, p + 1 + static_cast<int>(rng() % 8), false);
        for (int i = 0; i < seg.knots.control_count(); ++i) seg.control_points.push_back(random_control(rng));
        const auto a = sample(seg, seg.t_begin());
        const auto b = sample(seg, seg.t_end());
        CHECK(a.position == seg.control_points.front().head<3>());
        CHECK(a.quaternion_raw == seg.control_points.front().tail<4>());
        CHECK(b.position == seg.control_points.back().head<3>());
        CHECK(b.quaternion_raw == seg.control_points.back().tail<4>());
    }
}

TEST_CASE("evaluation normalizes the quaternion blend") {
    SplineSegment seg;
    seg.knots.degree = 1;
    seg.knots.u = {0, 0, 10, 10};
    Vec7 a, b;
    a << 0, 0, 0, 0, 0, 0, 2;
    b << 1, 2, 3, 0, 0, std::sin(0.5), std::cos(0.5);
    seg.control_points = {a, b};
    const Pose mid = evaluate(seg, 5.0);
    CHECK(mid.translation.isApprox(Vec3(0.5, 1.0, 1.5)));
    CHECK(mid.rotation.determinant() == doctest::Approx(1.0));
    CHECK_THROWS_AS(evaluate(seg, 11.0), DomainError);
    seg.control_points[1].tail<4>() = Vec4(0, 0, 0, -2);
    CHECK_THROWS_AS(evaluate(seg, 5.0), DomainError);
}

TEST_CASE("knot vector validation") {
    KnotVector kv;
    kv.degree = 3;
    kv.u = {0, 0, 0, 0, 5, 10, 10, 10, 10};
    CHECK_NOTHROW(kv.validate());
    CHECK(kv.control_count() == 5);
    kv.u = {0, 0, 0, 1, 5, 10, 10, 10, 10};
    CHECK_THROWS_AS(kv.validate(), DomainError);
    kv.u = {0, 0, 0, 0, 10, 10, 10, 10, 10};
    CHECK_THROWS_AS(kv.validate(), DomainError);
    kv.u = {0, 0, 0, 0, 6, 5, 10, 10, 10};
    CHECK_THROWS_AS(kv.validate(), DomainError);
}

TEST_CASE("segment grouping") {
    const std::vector<double> t{0, 1, 2, 10, 11, 12, 13, 30};
    const auto g = group_segments(t, 2.0, 3);
    REQUIRE(g.size() == 2);
    CHECK(g[0] == std::pair<std::size_t, std::size_t>(0, 2));
    CHECK(g[1] == std::pair<std::size_t, std::size_t>(3, 6));
    CHECK_THROWS_AS(group_segments(t, 2.0, 5), InfeasibleError);
    CHECK_THROWS_AS(group_segments({}, 2.0, 1), InfeasibleError);
}

TEST_CASE("hemisphere alignment") {
    std::vector<Quat> q{Quat(1, 0, 0, 0), Quat(-0.99, 0.1, 0, 0), Quat(0.98, -0.2, 0, 0)};
    const auto a = hemisphere_align(q);
    CHECK(a[1].w() > 0.0);
    CHECK(a[2].w() > 0.0);
    CHECK(a[1].x() == -0.1);
}

TEST_CASE("approximation knots") {
    std::vector<double> params;
    for (int i = 0; i < 20; ++i) params.push_back(1000.0 * i * i);
    for (int n_ctrl : {4, 7, 12, 20}) {
        const auto kv = approximation_knots(params, 3, n_ctrl);
        CHECK_NOTHROW(kv.validate());
        CHECK(kv.control_count() == n_ctrl);
        CHECK(kv.front() == params.front());
        CHECK(kv.back() == params.back());
    }
    // Equal counts reduce to parameter averaging.
    const auto kv = approximation_knots(params, 3, 20);
    CHECK(kv.u[4] == doctest::Approx((params[1] + params[2] + params[3]) / 3.0));
    CHECK_THROWS_AS(approximation_knots(params, 3, 3), PreconditionError);
    CHECK_THROWS_AS(approximation_knots(params, 3, 21), PreconditionError);
}

TEST_CASE("approximation reproduces data drawn from the same spline space") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> t;
        double acc = 0.0;
        const int m = 10 + static_cast<int>(rng() % 40);
        std::uniform_real_distribution<double> gap(5000.0, 40000.0);
        for (int i = 0; i < m; ++i) t.push_back(acc += gap(rng));
        const int n_ctrl = 4 + static_cast<int>(rng() % static_cast<unsigned>(m - 3));
        SplineSegment truth;
        truth.knots = approximation_knots(t, 3, n_ctrl);
        for (int i = 0; i < n_ctrl; ++i) truth.control_points.push_back(random_control(rng));
        std::vector<Vec7> samples;
        for (double ti : t) {
            const auto s = sample(truth, ti);
            Vec7 v;
            v << s.position, s.quaternion_raw;
            samples.push_back(v);
        }
        const auto fit = approximate_segment(t, samples, 3, n_ctrl);
        CAPTURE(trial);
        CHECK(approximation_residual(fit, t, samples) < 1e-16);
        for (int i = 0; i < n_ctrl; ++i)
            CHECK((fit.control_points[static_cast<std::size_t>(i)] - truth.control_points[static_cast<std::size_t>(i)])
                      .norm() < 1e-7);
    }
}

TEST_CASE("approximation rejects bad input") {
    const std::vector<double> t{0.0, 1.0, 1.0, 2.0};
    std::vector<Vec7> s(4, Vec7::Zero());
    CHECK_THROWS_AS(approximate_segment(std::vector<double>{2.0, 1.0}, std::vector<Vec7>(2), 1, 2), PreconditionError);
    CHECK_THROWS_AS(approximate_segment(t, std::vector<Vec7>(3), 1, 2), PreconditionError);
}
