#include <doctest.h>

#include "helpers.hpp"

#include <evcal/pattern.hpp>

#include <algorithm>
#include <random>

using namespace evcal;

namespace {

std::vector<CircleFeature> observe(const Pose& pose, const Intrinsics& k, const PatternSpec& spec) {
    std::vector<CircleFeature> out;
    for (const auto& l : board_points(spec)) {
        CircleFeature f;
        f.center = project(k, pose.to_camera(l));
        f.radius = 5.0;
        out.push_back(f);
    }
    return out;
}

}  // namespace

TEST_CASE("asymmetric board layout") {
    PatternSpec spec;
    const auto pts = board_points(spec);
    REQUIRE(pts.size() == 36);
    CHECK(pts[0] == Vec3(0, 0, 0));
    CHECK(pts[1].isApprox(Vec3(0.04, 0.02, 0)));
    CHECK(pts[9].isApprox(Vec3(0, 0.04, 0)));
    CHECK(pts[35].isApprox(Vec3(0.32, 0.12, 0)));
    CHECK(pts[34].isApprox(Vec3(0.28, 0.14, 0)));
    spec.asymmetric = false;
    CHECK(board_points(spec)[10].isApprox(Vec3(0.04, 0.04, 0)));
    spec.circle_radius = 0.03;
    CHECK_THROWS_AS(board_points(spec), ValidationError);
}

TEST_CASE("detect_grid recovers the labeling regardless of feature order") {
    std::mt19937_64 rng(5);
    const PatternSpec spec;
    const Intrinsics k = testing::default_intrinsics();
    int detected = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const Pose pose = testing::random_pose(rng);
        auto features = observe(pose, k, spec);
        const auto truth = features;
        std::shuffle(features.begin(), features.end(), rng);
        // Spurious features between circles, inside the board outline.
        features.push_back({0.5 * (truth[10].center + truth[19].center), 4.0, 0.0, -1, -1});
        features.push_back({0.5 * (truth[14].center + truth[24].center), 4.0, 0.0, -1, -1});
        const auto res = detect_grid(features, spec);
        if (!std::holds_alternative<PatternDetection>(res)) continue;
        ++detected;
        const auto& det = std::get<PatternDetection>(res);
        REQUIRE(det.features.size() == 36);
        for (std::size_t s = 0; s < 36; ++s) CHECK((det.features[s].center - truth[s].center).norm() < 1e-9);

        std::reverse(features.begin(), features.end());
        const auto again = detect_grid(features, spec);
        REQUIRE(std::holds_alternative<PatternDetection>(again));
        for (std::size_t s = 0; s < 36; ++s)
            CHECK(std::get<PatternDetection>(again).features[s].center == det.features[s].center);
    }
    CHECK(detected >= 27);
}

TEST_CASE("detect_grid failure modes") {
    const PatternSpec spec;
    std::vector<CircleFeature> few(10);
    const auto r = detect_grid(few, spec);
    REQUIRE(std::holds_alternative<DetectionFailure>(r));
    CHECK(std::get<DetectionFailure>(r) == DetectionFailure::too_few_features);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<CircleFeature> scattered;
    for (int i = 0; i < 40; ++i) scattered.push_back({Vec2(346 * u(rng), 260 * u(rng)), 4.0, 0.0, -1, -1});
    const auto r2 = detect_grid(scattered, spec);
    REQUIRE(std::holds_alternative<DetectionFailure>(r2));
    CHECK(std::get<DetectionFailure>(r2) == DetectionFailure::no_consistent_grid);
}

TEST_CASE("orientation consistency") {
    const PatternSpec spec;
    PatternDetection a, b;
    a.features.resize(36);
    b.features.resize(36);
    a.features[0].center = Vec2(0, 0);
    a.features[8].center = Vec2(100, 0);
    b.features[0].center = Vec2(0, 0);
    b.features[8].center = Vec2(100, 10);  // ~0.0997 rad
    CHECK(orientation_consistency_check(b, a, spec, 0.02, 6.0));
    CHECK_FALSE(orientation_consistency_check(b, a, spec, 0.01, 6.0));
    b.features[8].center = Vec2(-100, 0);  // flipped
    CHECK_FALSE(orientation_consistency_check(b, a, spec, 1.0, 3.0));
}
