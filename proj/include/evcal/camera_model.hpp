#pragma once

#include "evcal/common.hpp"

#include <array>
#include <span>

namespace evcal {

/// Perspective intrinsics with an inverse radial distortion polynomial:
/// beta(alpha) = 1 + k1 a^2 + k2 a^4 + k3 a^6 + k4 a^8 + k5 a^10, applied
/// while mapping pixels to the normalized image plane.
struct Intrinsics {
    static constexpr int kSize = 9;

    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    std::array<double, 5> k{};

    std::array<double, kSize> to_array() const;
    static Intrinsics from_array(std::span<const double> v);

    /// beta as a function of alpha^2.
    double beta(double alpha2) const;
    /// d beta / d(alpha^2).
    double beta_prime(double alpha2) const;
};

/// Largest alpha (distorted normalized radius) reached on the sensor, taken at
/// the four corners.
double sensor_alpha_max(const Intrinsics& k, const SensorGeometry& sensor);

/// Throws DomainError unless fx, fy > 0 and alpha * beta(alpha) is strictly
/// increasing with beta > 0 at 64 radii spanning the sensor diagonal.
void check_validity(const Intrinsics& k, const SensorGeometry& sensor);
bool is_valid(const Intrinsics& k, const SensorGeometry& sensor);

using IntrinsicsJacobian = Eigen::Matrix<double, 3, Intrinsics::kSize>;
using PixelJacobian = Eigen::Matrix<double, 3, 2>;

/// Pixel-to-ray normalization behind a parameter vector. The optimizer only
/// needs a continuously differentiable map and its Jacobians.
class NormalizationModel {
public:
    virtual ~NormalizationModel() = default;
    virtual int parameter_count() const = 0;
    virtual Vec3 normalize(std::span<const double> params, const Vec2& pixel, double* jac_params,
                           PixelJacobian* jac_pixel) const = 0;
};

/// The shipped instance: perspective + inverse radial distortion.
/// `jac_params` (if non-null) receives a row-major 3 x 9 block.
class RadialInverseModel final : public NormalizationModel {
public:
    int parameter_count() const override { return Intrinsics::kSize; }
    Vec3 normalize(std::span<const double> params, const Vec2& pixel, double* jac_params,
                   PixelJacobian* jac_pixel) const override;
};

Vec3 normalize(const Intrinsics& k, const Vec2& pixel, IntrinsicsJacobian* jac_k = nullptr,
               PixelJacobian* jac_pixel = nullptr);

/// Forward projection of a camera-frame point (z > 0). The radial map is
/// inverted with a safeguarded Newton solve; throws DomainError where it is
/// not invertible.
Vec2 project(const Intrinsics& k, const Vec3& x_cam);

/// Distorted normalized radius alpha with alpha * beta(alpha) = rho.
double invert_radial(const Intrinsics& k, double rho);

struct InverseFit {
    std::array<double, 5> k{};
    double max_residual = 0.0;  // normalized image units
};

/// Fits k1..k5 to the inverse of a forward radial model
/// r_d = r_u (1 + c1 r_u^2 + c2 r_u^4 + ...), sampled over alpha in [0, alpha_max].
InverseFit fit_inverse_from_forward(std::span<const double> forward, double alpha_max, int samples = 256);

}  // namespace evcal
