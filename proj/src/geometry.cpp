#include "evcal/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace evcal {

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Mat3 rotation_from_vector(const Vec3& rvec) {
    const double theta = rvec.norm();
    if (theta < 1e-12) return Mat3::Identity() + skew(rvec);
    return Eigen::AngleAxisd(theta, rvec / theta).toRotationMatrix();
}

Vec3 vector_from_rotation(const Mat3& rotation) {
    const Eigen::AngleAxisd aa(rotation);
    return aa.axis() * aa.angle();
}

namespace {

// Similarity taking the points to zero mean and mean distance sqrt(2).
Mat3 normalizing_transform(std::span<const Vec2> pts) {
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double dist = 0.0;
    for (const auto& p : pts) dist += (p - mean).norm();
    dist /= static_cast<double>(pts.size());
    const double s = dist > 1e-15 ? std::sqrt(2.0) / dist : 1.0;
    Mat3 t;
    t << s, 0.0, -s * mean.x(),
         0.0, s, -s * mean.y(),
         0.0, 0.0, 1.0;
    return t;
}

}  // namespace

Mat3 estimate_homography(std::span<const Vec2> to, std::span<const Vec2> from) {
    if (to.size() != from.size() || to.size() < 4) throw DomainError("homography needs at least four correspondences");
    const Mat3 t_to = normalizing_transform(to);
    const Mat3 t_from = normalizing_transform(from);
    const auto n = static_cast<Eigen::Index>(to.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 x = t_from * from[static_cast<std::size_t>(i)].homogeneous();
        const Vec3 y = t_to * to[static_cast<std::size_t>(i)].homogeneous();
        a.row(2 * i) << 0.0, 0.0, 0.0, -x.transpose(), y.y() * x.transpose();
        a.row(2 * i + 1) << x.transpose(), 0.0, 0.0, 0.0, -y.x() * x.transpose();
    }
    Eigen::MatrixXd ata = a.transpose() * a;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
    const auto& ev = eig.eigenvalues();
    // A one-dimensional null space is required; a second near-zero eigenvalue
    // means collinear or repeated points.
    if (ev(1) <= 1e-14 * ev(8)) throw DomainError("degenerate homography configuration (rank deficient)");
    const Eigen::Matrix<double, 9, 1> h = eig.eigenvectors().col(0);
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Mat3 out = t_to.inverse() * hn * t_from;
    if (std::abs(out(2, 2)) < 1e-15) throw DomainError("homography maps origin to infinity");
    return out / out(2, 2);
}

Vec2 apply_homography(const Mat3& h, const Vec2& p) {
    const Vec3 q = h * p.homogeneous();
    return q.hnormalized();
}

}  // namespace evcal
