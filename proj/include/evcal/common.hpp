#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace evcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Quat = Eigen::Quaterniond;

/// Sensor pixel array size. Coordinates run over [0, width) x [0, height).
struct SensorGeometry {
    int width = 346;
    int height = 260;

    bool contains(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x < width && y < height;
    }
};

// Error taxonomy. Each module throws the most specific of these; callers that
// only care about "calibration failed" can catch std::runtime_error.

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ConditioningError : public std::runtime_error {
public:
    ConditioningError(const std::string& what, double condition)
        : std::runtime_error(what + " (condition " + std::to_string(condition) + ")"),
          condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

class PreconditionError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class InfeasibleError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace evcal
