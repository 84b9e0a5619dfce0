#include "evcal/camera_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace evcal {

std::array<double, Intrinsics::kSize> Intrinsics::to_array() const {
    return {fx, fy, cx, cy, k[0], k[1], k[2], k[3], k[4]};
}

Intrinsics Intrinsics::from_array(std::span<const double> v) {
    if (v.size() != kSize) throw PreconditionError("intrinsics need 9 values");
    return Intrinsics{v[0], v[1], v[2], v[3], {v[4], v[5], v[6], v[7], v[8]}};
}

double Intrinsics::beta(double a2) const {
    return 1.0 + a2 * (k[0] + a2 * (k[1] + a2 * (k[2] + a2 * (k[3] + a2 * k[4]))));
}

double Intrinsics::beta_prime(double a2) const {
    return k[0] + a2 * (2.0 * k[1] + a2 * (3.0 * k[2] + a2 * (4.0 * k[3] + a2 * 5.0 * k[4])));
}

double sensor_alpha_max(const Intrinsics& k, const SensorGeometry& sensor) {
    double best = 0.0;
    for (double x : {0.0, sensor.width - 1.0}) {
        for (double y : {0.0, sensor.height - 1.0}) {
            best = std::max(best, std::hypot((x - k.cx) / k.fx, (y - k.cy) / k.fy));
        }
    }
    return best;
}

void check_validity(const Intrinsics& k, const SensorGeometry& sensor) {
    if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw DomainError("focal lengths must be positive");
    const double a_max = sensor_alpha_max(k, sensor);
    for (int i = 0; i <= 63; ++i) {
        const double a = a_max * i / 63.0;
        const double a2 = a * a;
        // d/da (a beta(a)) = beta + 2 a^2 beta'(a^2)
        if (!(k.beta(a2) > 0.0) || !(k.beta(a2) + 2.0 * a2 * k.beta_prime(a2) > 0.0)) {
            throw DomainError("radial map not invertible at alpha = " + std::to_string(a));
        }
    }
}

bool is_valid(const Intrinsics& k, const SensorGeometry& sensor) {
    try {
        check_validity(k, sensor);
        return true;
    } catch (const DomainError&) {
        return false;
    }
}

Vec3 normalize(const Intrinsics& k, const Vec2& m, IntrinsicsJacobian* jac_k, PixelJacobian* jac_m) {
    const double px = (m.x() - k.cx) / k.fx;
    const double py = (m.y() - k.cy) / k.fy;
    const double a2 = px * px + py * py;
    const double beta = k.beta(a2);
    if (jac_k || jac_m) {
        const double db = k.beta_prime(a2);
        // d(beta P)/dP = beta I + 2 beta' P P^T
        Eigen::Matrix2d dn_dp;
        dn_dp << beta + 2.0 * db * px * px, 2.0 * db * px * py,
                 2.0 * db * px * py, beta + 2.0 * db * py * py;
        if (jac_k) {
            jac_k->setZero();
            // dP/d(fx, fy, cx, cy)
            jac_k->block<2, 1>(0, 0) = dn_dp.col(0) * (-px / k.fx);
            jac_k->block<2, 1>(0, 1) = dn_dp.col(1) * (-py / k.fy);
            jac_k->block<2, 1>(0, 2) = dn_dp.col(0) * (-1.0 / k.fx);
            jac_k->block<2, 1>(0, 3) = dn_dp.col(1) * (-1.0 / k.fy);
            double a_pow = a2;
            for (int j = 0; j < 5; ++j) {
                (*jac_k)(0, 4 + j) = a_pow * px;
                (*jac_k)(1, 4 + j) = a_pow * py;
                a_pow *= a2;
            }
        }
        if (jac_m) {
            jac_m->setZero();
            jac_m->block<2, 1>(0, 0) = dn_dp.col(0) / k.fx;
            jac_m->block<2, 1>(0, 1) = dn_dp.col(1) / k.fy;
        }
    }
    return {beta * px, beta * py, 1.0};
}

Vec3 RadialInverseModel::normalize(std::span<const double> params, const Vec2& pixel, double* jac_params,
                                   PixelJacobian* jac_pixel) const {
    const Intrinsics k = Intrinsics::from_array(params);
    if (!jac_params) return evcal::normalize(k, pixel, nullptr, jac_pixel);
    IntrinsicsJacobian jk;
    const Vec3 n = evcal::normalize(k, pixel, &jk, jac_pixel);
    Eigen::Map<Eigen::Matrix<double, 3, Intrinsics::kSize, Eigen::RowMajor>> out(jac_params);
    out = jk;
    return n;
}

double invert_radial(const Intrinsics& k, double rho) {
    if (rho < 0.0) throw DomainError("negative radius");
    if (rho == 0.0) return 0.0;
    auto g = [&](double a) { return a * k.beta(a * a) - rho; };
    auto dg = [&](double a) { return k.beta(a * a) + 2.0 * a * a * k.beta_prime(a * a); };

    double lo = 0.0;
    double hi = rho;
    int grow = 0;
    while (g(hi) < 0.0) {
        if (dg(hi) <= 0.0 || ++grow > 60) throw DomainError("radial map not invertible at rho = " + std::to_string(rho));
        lo = hi;
        hi *= 2.0;
    }
    double a = std::clamp(rho / k.beta(rho * rho), lo, hi);
    if (!std::isfinite(a)) a = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double f = g(a);
        if (f < 0.0) lo = a; else hi = a;
        const double d = dg(a);
        double next = (d > 0.0) ? a - f / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - a) <= 1e-16 * std::max(1.0, a)) {
            a = next;
            break;
        }
        a = next;
    }
    if (!(dg(a) > 0.0)) throw DomainError("radial map not invertible at rho = " + std::to_string(rho));
    return a;
}

Vec2 project(const Intrinsics& k, const Vec3& x) {
    if (!(x.z() > 0.0)) throw DomainError("point behind the camera");
    const Vec2 u(x.x() / x.z(), x.y() / x.z());
    const double rho = u.norm();
    if (rho == 0.0) return {k.cx, k.cy};
    const double a = invert_radial(k, rho);
    const Vec2 p = u * (a / rho);
    return {k.fx * p.x() + k.cx, k.fy * p.y() + k.cy};
}

InverseFit fit_inverse_from_forward(std::span<const double> forward, double alpha_max, int samples) {
    if (!(alpha_max > 0.0) || samples < 8) throw PreconditionError("invalid inverse-fit range");
    auto fwd = [&](double r) {
        const double r2 = r * r;
        double poly = 0.0;
        for (std::size_t i = forward.size(); i-- > 0;) poly = poly * r2 + forward[i];
        return r * (1.0 + r2 * poly);
    };
    auto dfwd = [&](double r) {
        const double r2 = r * r;
        double s = 1.0;
        double p = r2;
        for (std::size_t i = 0; i < forward.size(); ++i, p *= r2) s += (2.0 * i + 3.0) * forward[i] * p;
        return s;
    };

    // Undistorted radius at which the forward model reaches alpha_max.
    double hi = alpha_max;
    for (int i = 0; fwd(hi) < alpha_max; ++i) {
        if (i > 60) throw DomainError("forward model never reaches the sensor radius");
        hi *= 1.5;
    }
    for (int i = 0; i <= 4 * samples; ++i) {
        if (!(dfwd(hi * i / (4.0 * samples)) > 0.0)) throw DomainError("forward distortion model is not monotone");
    }
    auto solve_forward = [&](double target) {
        double lo = 0.0, up = hi;
        for (int it = 0; it < 200 && up - lo > 1e-17; ++it) {
            const double mid = 0.5 * (lo + up);
            (fwd(mid) < target ? lo : up) = mid;
        }
        return 0.5 * (lo + up);
    };

    // beta(a) - 1 = sum_j k_j a^{2j}; fit in z = (a / alpha_max)^2 for conditioning.
    Eigen::MatrixXd a_mat(samples, 5);
    Eigen::VectorXd b_vec(samples);
    std::vector<double> alphas(static_cast<std::size_t>(samples)), undist(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        const double a = alpha_max * (i + 1) / samples;
        const double ru = solve_forward(a);
        alphas[static_cast<std::size_t>(i)] = a;
        undist[static_cast<std::size_t>(i)] = ru;
        const double z = (a / alpha_max) * (a / alpha_max);
        double zp = z;
        for (int j = 0; j < 5; ++j, zp *= z) a_mat(i, j) = zp;
        b_vec(i) = ru / a - 1.0;
    }
    const Eigen::VectorXd sol = a_mat.colPivHouseholderQr().solve(b_vec);
    InverseFit fit;
    double scale = 1.0;
    for (int j = 0; j < 5; ++j) {
        scale *= alpha_max * alpha_max;
        fit.k[static_cast<std::size_t>(j)] = sol(j) / scale;
    }
    Intrinsics probe;
    probe.k = fit.k;
    for (int i = 0; i < samples; ++i) {
        const double a = alphas[static_cast<std::size_t>(i)];
        fit.max_residual = std::max(fit.max_residual, std::abs(a * probe.beta(a * a) - undist[static_cast<std::size_t>(i)]));
    }
    return fit;
}

}  // namespace evcal
