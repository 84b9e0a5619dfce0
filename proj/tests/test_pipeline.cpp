#include <doctest.h>

#include "helpers.hpp"

#include <evcal/pipeline.hpp>
#include <evcal/synthetic.hpp>

using namespace evcal;

namespace {

// Structural equality with a relative tolerance on floating-point leaves.
bool json_near(const nlohmann::json& a, const nlohmann::json& b, double tol) {
    if (a.is_number_float() || b.is_number_float()) {
        if (!a.is_number() || !b.is_number()) return false;
        const double x = a.get<double>(), y = b.get<double>();
        return std::abs(x - y) <= tol * std::max(1.0, std::max(std::abs(x), std::abs(y)));
    }
    if (a.type() != b.type() || a.size() != b.size()) return false;
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key()) || !json_near(it.value(), b.at(it.key()), tol)) return false;
        }
        return true;
    }
    if (a.is_array()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!json_near(a[i], b[i], tol)) return false;
        }
        return true;
    }
    return a == b;
}

const SyntheticOutput& short_sequence() {
    static const SyntheticOutput out = [] {
        SyntheticScene s = default_scene();
        s.duration_s = 3.0;
        return generate(s);
    }();
    return out;
}

}  // namespace

TEST_CASE("config defaults survive a json round trip") {
    const CalibrationConfig c;
    const auto j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);
    CHECK(j["features"]["mode"] == "soft");
    CHECK(c.augment_dt_max_us() == doctest::Approx(4.0 * 15000.0 / 2.0));
}

TEST_CASE("config overrides and validation") {
    const auto c = config_from_json(nlohmann::json::parse(R"({"features":{"mode":"hard"},"seed":11})"));
    CHECK(c.features.mode == ExtractionMode::hard);
    CHECK(c.seed == 11);
    CHECK(c.clustering.eps == 3.0);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"featurs":{}})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"features":{"mod":"hard"}})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"features":{"mode":"fuzzy"}})")), ValidationError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"clustering":{"eps":"wide"}})")), ValidationError);
    CalibrationConfig bad;
    bad.spline.degree = 9;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = CalibrationConfig{};
    bad.threads = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("residual statistics") {
    const std::vector<double> r{-0.002, -0.001, 0.0, 0.001, 0.002};
    const auto s = residual_stats(r, 0.0015, 10);
    CHECK(s.count == 5);
    CHECK(s.rms == doctest::Approx(std::sqrt(0.00001 / 5)));
    CHECK(s.mean_abs == doctest::Approx(0.0012));
    std::size_t total = 0;
    for (auto h : s.histogram) total += h;
    CHECK(total == 5);
    CHECK(s.robust_cost == doctest::Approx(2 * (2 * 0.0015 * 0.002 - 0.0015 * 0.0015) + 2 * 1e-6));
    CHECK(residual_stats({}, 1.0).count == 0);
}

TEST_CASE("empty input is infeasible") {
    CHECK_THROWS_AS(calibrate({}, CalibrationConfig{}), InfeasibleError);
}

TEST_CASE("short synthetic sequence calibrates and serializes") {
    const auto& seq = short_sequence();
    CalibrationConfig config;
    const auto res = calibrate(seq.events, config);
    CHECK(res.report.converged);
    CHECK(res.stages.accepted >= 10);
    CHECK(res.segments.size() >= 1);
    CHECK(res.intrinsics.fx == doctest::Approx(340.0).epsilon(0.01));
    CHECK(res.intrinsics.cx == doctest::Approx(173.0).epsilon(0.01));
    CHECK(res.augmented_correspondences > 0);
    std::size_t accepted = 0;
    for (const auto& f : res.frames) {
        if (f.status == "accepted") {
            ++accepted;
            CHECK(f.refined_pose.has_value());
            CHECK(f.segment >= 0);
        }
    }
    CHECK(accepted == res.stages.accepted);

    const auto j = result_to_json(res);
    const auto back = result_from_json(j);
    // Poses pass through a rotation matrix, so allow last-bit differences.
    CHECK(json_near(result_to_json(back), j, 1e-12));
    CHECK(j["tool_version"] == kToolVersion);

    // Worker count does not change the result.
    config.threads = 2;
    auto threaded = result_to_json(calibrate(seq.events, config));
    CHECK(threaded["config"]["threads"] == 2);
    threaded["config"]["threads"] = 1;
    CHECK(threaded.dump() == j.dump());
}
