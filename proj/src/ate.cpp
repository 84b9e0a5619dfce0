#include "evcal/ate.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <vector>

namespace evcal {

AteStats absolute_trajectory_error(std::span<const TimedPose> estimate, std::span<const TimedPose> ground_truth,
                                   double max_offset_us) {
    std::vector<TimedPose> gt(ground_truth.begin(), ground_truth.end());
    std::stable_sort(gt.begin(), gt.end(), [](const TimedPose& a, const TimedPose& b) { return a.t_us < b.t_us; });

    std::vector<Vec3> est_p, gt_p;
    for (const auto& e : estimate) {
        const auto it = std::lower_bound(gt.begin(), gt.end(), e.t_us,
                                         [](const TimedPose& p, double t) { return p.t_us < t; });
        const TimedPose* best = nullptr;
        if (it != gt.end()) best = &*it;
        if (it != gt.begin() && (!best || e.t_us - std::prev(it)->t_us <= best->t_us - e.t_us)) best = &*std::prev(it);
        if (best && std::abs(best->t_us - e.t_us) <= max_offset_us) {
            est_p.push_back(e.pose.translation);
            gt_p.push_back(best->pose.translation);
        }
    }
    if (est_p.empty()) throw ValidationError("no timestamp associations between the trajectories");

    const auto n = static_cast<double>(est_p.size());
    Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
    for (std::size_t i = 0; i < est_p.size(); ++i) {
        me += est_p[i];
        mg += gt_p[i];
    }
    me /= n;
    mg /= n;
    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < est_p.size(); ++i) cov += (gt_p[i] - mg) * (est_p[i] - me).transpose();
    const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 s = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
    AteStats out;
    out.rotation = est_p.size() >= 3 ? Mat3(svd.matrixU() * s * svd.matrixV().transpose()) : Mat3::Identity();
    out.translation = mg - out.rotation * me;

    std::vector<double> err;
    for (std::size_t i = 0; i < est_p.size(); ++i) err.push_back((out.rotation * est_p[i] + out.translation - gt_p[i]).norm());
    out.matches = err.size();
    double sq = 0.0, sum = 0.0;
    for (double e : err) {
        sq += e * e;
        sum += e;
    }
    out.rmse = std::sqrt(sq / n);
    out.mean = sum / n;
    double var = 0.0;
    for (double e : err) var += (e - out.mean) * (e - out.mean);
    out.std = std::sqrt(var / n);
    std::sort(err.begin(), err.end());
    out.median = err.size() % 2 ? err[err.size() / 2] : 0.5 * (err[err.size() / 2 - 1] + err[err.size() / 2]);
    return out;
}

}  // namespace evcal
