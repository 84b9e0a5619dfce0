#include <doctest.h>

#include "helpers.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run_cli(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd =
        std::string("\"") + EVCAL_BINARY + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// One shared 3 s synthetic sequence for the calibrate cases.
struct Fixture {
    testing::TempDir dir{"cli"};
    fs::path events, gt;
    Fixture() {
        write(dir.path / "scene.json", R"({"preset":"default","duration_s":3.0})");
        const auto r = run_cli("simulate --scene \"" + (dir.path / "scene.json").string() + "\" --out-prefix \"" +
                                 (dir.path / "seq").string() + "\"",
                             dir.path);
        REQUIRE(r.code == 0);
        events = dir.path / "seq_events.csv";
        gt = dir.path / "seq_gt.txt";
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("print-config emits the full default config") {
    testing::TempDir dir("cfg");
    const auto r = run_cli("calibrate --print-config", dir.path);
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.contains("solver"));
    CHECK(j["features"]["mode"] == "soft");
}

TEST_CASE("usage and input errors exit 1") {
    testing::TempDir dir("usage");
    CHECK(run_cli("", dir.path).code == 1);
    CHECK(run_cli("calibrate --mode medium --events x --out y", dir.path).code == 1);
    CHECK(run_cli("calibrate --events /nonexistent.csv --out " + q(dir.path / "r.json"), dir.path).code == 1);
    CHECK(run_cli("--help", dir.path).code == 0);

    write(dir.path / "empty.csv", "");
    const auto r = run_cli("calibrate --events " + q(dir.path / "empty.csv") + " --out " + q(dir.path / "r.json"), dir.path);
    CHECK(r.code == 1);
    CHECK(r.err.find("no reference frames") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path / "r.json"));

    write(dir.path / "bad.json", R"({"solvr":{}})");
    CHECK(run_cli("calibrate --events " + q(dir.path / "empty.csv") + " --config " + q(dir.path / "bad.json") +
                    " --out " + q(dir.path / "r.json"),
                dir.path)
              .code == 1);
}

TEST_CASE("simulate: determinism and zero duration") {
    testing::TempDir dir("sim");
    write(dir.path / "s.json", R"({"duration_s":1.0})");
    for (const char* name : {"a", "b"}) {
        CHECK(run_cli("simulate --scene " + q(dir.path / "s.json") + " --out-prefix " + q(dir.path / name), dir.path).code ==
              0);
    }
    CHECK(slurp(dir.path / "a_events.csv") == slurp(dir.path / "b_events.csv"));
    CHECK(slurp(dir.path / "a_gt.txt") == slurp(dir.path / "b_gt.txt"));

    write(dir.path / "z.json", R"({"duration_s":0.0})");
    CHECK(run_cli("simulate --scene " + q(dir.path / "z.json") + " --out-prefix " + q(dir.path / "z"), dir.path).code == 0);
    CHECK(slurp(dir.path / "z_events.csv").empty());
    CHECK(slurp(dir.path / "z_gt.txt") == "# t_us tx ty tz qx qy qz qw\n");

    write(dir.path / "b.json", R"({"duration_s":0.5,"format":"binary"})");
    CHECK(run_cli("simulate --scene " + q(dir.path / "b.json") + " --out-prefix " + q(dir.path / "bin"), dir.path).code ==
          0);
    CHECK(fs::file_size(dir.path / "bin_events.evb") % 13 == 0);

    write(dir.path / "bad.json", R"({"duration":1.0})");
    CHECK(run_cli("simulate --scene " + q(dir.path / "bad.json") + " --out-prefix " + q(dir.path / "x"), dir.path).code == 1);
}

TEST_CASE("evaluate-ate on identical trajectories") {
    auto& f = fixture();
    const auto r = run_cli("evaluate-ate --est " + q(f.gt) + " --gt " + q(f.gt), f.dir.path);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["rmse"].get<double>() < 1e-9);
    CHECK(j["matches"].get<int>() == 3001);
}

TEST_CASE("calibrate: exit codes, determinism and report") {
    auto& f = fixture();
    const auto& d = f.dir.path;
    const auto a = run_cli("calibrate --events " + q(f.events) + " --out " + q(d / "a.json") + " --seed 3", d);
    REQUIRE(a.code == 0);
    const auto b = run_cli("calibrate --events " + q(f.events) + " --out " + q(d / "b.json") + " --seed 3 --threads 2", d);
    REQUIRE(b.code == 0);
    const auto a2 = run_cli("calibrate --events " + q(f.events) + " --out " + q(d / "a2.json") + " --seed 3", d);
    REQUIRE(a2.code == 0);
    CHECK(slurp(d / "a.json") == slurp(d / "a2.json"));
    // Only the recorded worker count differs across thread counts.
    auto threaded = nlohmann::json::parse(slurp(d / "b.json"));
    CHECK(threaded["config"]["threads"] == 2);
    threaded["config"]["threads"] = 1;
    CHECK(threaded.dump(2) + "\n" == slurp(d / "a.json"));

    const auto result = nlohmann::json::parse(slurp(d / "a.json"));
    CHECK(result["intrinsics"].contains("fx"));
    CHECK(result["intrinsics"]["k"].size() == 5);
    CHECK(result["segments"].size() >= 1);
    CHECK(result["config"]["seed"] == 3);

    const auto ate = run_cli("evaluate-ate --est " + q(d / "a.json") + " --gt " + q(f.gt), d);
    REQUIRE(ate.code == 0);
    CHECK(nlohmann::json::parse(ate.out)["rmse"].get<double>() < 0.005);

    write(d / "short.json", R"({"solver":{"max_iterations":1}})");
    const auto nc = run_cli("calibrate --events " + q(f.events) + " --config " + q(d / "short.json") + " --out " +
                              q(d / "nc.json"),
                          d);
    CHECK(nc.code == 2);
    CHECK(fs::exists(d / "nc.json"));

    const auto rep = run_cli("report --result " + q(d / "a.json") + " --events " + q(f.events) + " --out-dir " +
                               q(d / "report"),
                           d);
    CHECK(rep.code == 0);
    CHECK(fs::exists(d / "report" / "summary.txt"));
    CHECK(fs::exists(d / "report" / "residual_histogram.png"));
    CHECK(fs::exists(d / "report" / "undistorted_features.png"));
    CHECK(fs::exists(d / "report" / "frame_0000.png"));

    // A result without frames yields only the summary.
    auto empty = result;
    empty["frames"] = nlohmann::json::array();
    write(d / "empty_frames.json", empty.dump());
    const auto rep2 = run_cli("report --result " + q(d / "empty_frames.json") + " --events " + q(f.events) +
                                " --out-dir " + q(d / "report2"),
                            d);
    CHECK(rep2.code == 0);
    CHECK(fs::exists(d / "report2" / "summary.txt"));
    CHECK_FALSE(fs::exists(d / "report2" / "frame_0000.png"));
}

TEST_CASE("calibrate: hard mode accepts no more frames than soft mode") {
    auto& f = fixture();
    const auto& d = f.dir.path;
    REQUIRE(run_cli("calibrate --events " + q(f.events) + " --out " + q(d / "soft.json") + " --mode soft", d).code == 0);
    const auto hard = run_cli("calibrate --events " + q(f.events) + " --out " + q(d / "hard.json") + " --mode hard", d);
    REQUIRE((hard.code == 0 || hard.code == 1));
    if (hard.code == 0) {
        auto count = [](const nlohmann::json& j) { return j["stages"]["accepted"].get<int>(); };
        CHECK(count(nlohmann::json::parse(slurp(d / "hard.json"))) <= count(nlohmann::json::parse(slurp(d / "soft.json"))));
    }
}
