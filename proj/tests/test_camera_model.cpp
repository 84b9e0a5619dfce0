#include <doctest.h>

#include "helpers.hpp"

#include <evcal/camera_model.hpp>

#include <random>

using namespace evcal;

TEST_CASE("beta polynomial and derivative") {
    Intrinsics k;
    k.k = {0.1, -0.02, 0.003, 0.0, 0.0005};
    const double a2 = 0.3;
    CHECK(k.beta(a2) == doctest::Approx(1 + 0.1 * a2 - 0.02 * a2 * a2 + 0.003 * a2 * a2 * a2 +
                                        0.0005 * std::pow(a2, 5)));
    const double h = 1e-6;
    CHECK(k.beta_prime(a2) == doctest::Approx((k.beta(a2 + h) - k.beta(a2 - h)) / (2 * h)).epsilon(1e-8));
}

TEST_CASE("array round trip") {
    const Intrinsics k = testing::default_intrinsics();
    const auto a = k.to_array();
    const auto b = Intrinsics::from_array(a);
    CHECK(b.to_array() == a);
}

TEST_CASE("normalize and project are inverse to 1e-8 px") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ux(0.0, 345.0), uy(0.0, 259.0);
    for (const double k1 : {0.0, 0.35, -0.1}) {
        Intrinsics k = testing::default_intrinsics();
        k.k[0] = k1;
        k.k[1] = k1 > 0 ? 0.05 : 0.0;
        double worst = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const Vec2 px(ux(rng), uy(rng));
            const Vec3 ray = normalize(k, px);
            CHECK(ray.z() == 1.0);
            worst = std::max(worst, (project(k, 2.5 * ray) - px).norm());
        }
        CAPTURE(k1);
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("normalization Jacobians match central differences") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ux(0.0, 345.0), uy(0.0, 259.0);
    Intrinsics k = testing::default_intrinsics();
    k.k = {0.35, 0.04, -0.01, 0.002, 0.0003};
    for (int i = 0; i < 200; ++i) {
        const Vec2 px(ux(rng), uy(rng));
        IntrinsicsJacobian jk;
        PixelJacobian jp;
        normalize(k, px, &jk, &jp);
        auto params = k.to_array();
        for (int c = 0; c < Intrinsics::kSize; ++c) {
            const double h = 1e-6 * std::max(1.0, std::abs(params[static_cast<std::size_t>(c)]));
            auto plus = params, minus = params;
            plus[static_cast<std::size_t>(c)] += h;
            minus[static_cast<std::size_t>(c)] -= h;
            const Vec3 fd = (normalize(Intrinsics::from_array(plus), px) - normalize(Intrinsics::from_array(minus), px)) /
                            (2 * h);
            CHECK((jk.col(c) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
        }
        for (int c = 0; c < 2; ++c) {
            Vec2 d = Vec2::Zero();
            d(c) = 1e-4;
            const Vec3 fd = (normalize(k, px + d) - normalize(k, px - d)) / 2e-4;
            CHECK((jp.col(c) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
        }
    }
}

TEST_CASE("model interface agrees with the free function") {
    const Intrinsics k = testing::default_intrinsics();
    const RadialInverseModel model;
    CHECK(model.parameter_count() == 9);
    const auto params = k.to_array();
    double jac[27];
    PixelJacobian jp;
    const Vec3 a = model.normalize(params, Vec2(12.0, 200.0), jac, &jp);
    IntrinsicsJacobian jk;
    const Vec3 b = normalize(k, Vec2(12.0, 200.0), &jk);
    CHECK(a == b);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 9; ++c) CHECK(jac[r * 9 + c] == jk(r, c));
}

TEST_CASE("validity of the radial model") {
    const SensorGeometry sensor;
    CHECK(is_valid(testing::default_intrinsics(), sensor));
    Intrinsics bad = testing::default_intrinsics();
    bad.k[0] = -3.0;  // alpha * beta folds over inside the sensor
    CHECK_FALSE(is_valid(bad, sensor));
    CHECK_THROWS_AS(check_validity(bad, sensor), DomainError);
    Intrinsics neg = testing::default_intrinsics();
    neg.fx = -1.0;
    CHECK_FALSE(is_valid(neg, sensor));
    CHECK(sensor_alpha_max(testing::default_intrinsics(), sensor) ==
          doctest::Approx(std::hypot(173.0, 130.0) / 340.0).epsilon(0.02));
}

TEST_CASE("invert_radial solves alpha * beta(alpha) = rho") {
    const Intrinsics k = testing::default_intrinsics();
    for (double rho : {0.0, 0.1, 0.4, 0.7}) {
        const double a = invert_radial(k, rho);
        CHECK(a * k.beta(a * a) == doctest::Approx(rho).epsilon(1e-12));
    }
    CHECK_THROWS_AS(project(k, Vec3(0.0, 0.0, -1.0)), DomainError);
}

TEST_CASE("inverse fit of a forward radial model") {
    // Forward r_d = r_u (1 + c1 r_u^2); the inverse maps alpha = r_d back to r_u.
    const std::array<double, 2> forward{-0.25, 0.05};
    const auto fit = fit_inverse_from_forward(forward, 0.6);
    CHECK(fit.max_residual < 1e-4);
    Intrinsics k;
    k.k = fit.k;
    for (double ru : {0.05, 0.2, 0.35, 0.45}) {
        const double rd = ru * (1 + forward[0] * ru * ru + forward[1] * ru * ru * ru * ru);
        CHECK(rd * k.beta(rd * rd) == doctest::Approx(ru).epsilon(1e-3));
    }
}
