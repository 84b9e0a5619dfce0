#pragma once

#include <evcal/camera_model.hpp>
#include <evcal/geometry.hpp>

#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline evcal::Intrinsics default_intrinsics() {
    evcal::Intrinsics k;
    k.fx = 340.0;
    k.fy = 340.0;
    k.cx = 173.0;
    k.cy = 130.0;
    k.k = {0.35, 0.0, 0.0, 0.0, 0.0};
    return k;
}

inline evcal::Pose random_pose(std::mt19937_64& rng, double distance = 0.5) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const evcal::Vec3 axis(u(rng), u(rng), u(rng));
    // Camera above the board looking down +z with a moderate tilt.
    const evcal::Mat3 tilt = evcal::rotation_from_vector(0.3 * axis);
    const evcal::Vec3 target(0.16 + 0.02 * u(rng), 0.07 + 0.02 * u(rng), 0.0);
    evcal::Pose p;
    p.rotation = tilt;
    p.translation = target - distance * (tilt * evcal::Vec3::UnitZ());
    return p;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("evcal_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace testing
