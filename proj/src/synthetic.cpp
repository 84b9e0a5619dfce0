#include "evcal/synthetic.hpp"

#include "evcal/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace evcal {

SyntheticScene default_scene() {
    SyntheticScene s;
    s.intrinsics_gt.fx = 340.0;
    s.intrinsics_gt.fy = 340.0;
    s.intrinsics_gt.cx = 173.0;
    s.intrinsics_gt.cy = 130.0;
    s.intrinsics_gt.k = {0.35, 0.0, 0.0, 0.0, 0.0};
    return s;
}

SyntheticScene high_velocity_scene() {
    SyntheticScene s = default_scene();
    s.duration_s = 8.0;
    s.motion.speed_scale = 2.0;
    return s;
}

Pose motion_pose(const SyntheticScene& scene, double t_s) {
    const MotionProfile& m = scene.motion;
    const double t = m.stationary ? 0.0 : t_s * m.speed_scale;
    auto wave = [t](double freq_hz, double phase) { return std::sin(2.0 * M_PI * freq_hz * t + phase); };
    const double deg = M_PI / 180.0;

    const auto board = board_points(scene.pattern);
    Vec3 center = Vec3::Zero();
    for (const auto& p : board) center += p;
    center /= static_cast<double>(board.size());

    const Vec3 target = center + Vec3(m.offset_x * wave(0.17, 0.4), m.offset_y * wave(0.27, 1.3), 0.0);
    const double tilt_x = m.tilt_deg * deg * wave(0.23, 0.9);
    const double tilt_y = m.tilt_deg * deg * wave(0.31, 2.1);
    const double roll = m.roll_deg * deg * wave(0.13, 0.2);
    const double dist = m.distance + m.distance_swing * wave(0.19, 2.7);

    const Vec3 dir = (Eigen::AngleAxisd(tilt_y, Vec3::UnitY()) * Eigen::AngleAxisd(tilt_x, Vec3::UnitX()) *
                      Vec3(0.0, 0.0, -1.0));
    const Vec3 position = target + dist * dir;
    const Vec3 z = (target - position).normalized();
    const Vec3 ref = Eigen::AngleAxisd(roll, Vec3::UnitZ()) * Vec3::UnitX();
    const Vec3 x = (ref - ref.dot(z) * z).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return Pose{r, position};
}

std::vector<SplineSegment> ground_truth_trajectory(const SyntheticScene& scene) {
    if (!(scene.duration_s > 0.0)) return {};
    const auto steps = std::max<long>(3, std::lround(std::ceil(scene.duration_s / scene.control_interval_s)));
    std::vector<double> t;
    std::vector<Quat> q;
    std::vector<Pose> poses;
    for (long i = 0; i <= steps; ++i) {
        const double ts = scene.duration_s * static_cast<double>(i) / static_cast<double>(steps);
        t.push_back(ts * 1e6);
        poses.push_back(motion_pose(scene, ts));
        q.push_back(poses.back().quaternion());
    }
    const auto aligned = hemisphere_align(q);
    std::vector<Vec7> samples;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        Vec7 v;
        v << poses[i].translation, aligned[i].coeffs();
        samples.push_back(v);
    }
    auto seg = approximate_segment(t, samples, 3, static_cast<int>(samples.size()));
    seg.first_frame = 0;
    seg.last_frame = samples.size() - 1;
    return {seg};
}

namespace {

constexpr int kBins = 32;
constexpr double kSliceUs = 1000.0;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool project_board(const Pose& pose, const Intrinsics& k, const Vec3& p, Vec2& out) {
    const Vec3 c = pose.to_camera(p);
    if (!(c.z() > 1e-6)) return false;
    try {
        out = project(k, c);
    } catch (const DomainError&) {
        return false;
    }
    return true;
}

// Emission weights of every circle and angle bin over one time slice.
struct SliceCache {
    std::vector<double> circle_cdf;                // cumulative circle weights
    std::vector<std::array<double, kBins>> bin_cdf;  // per circle, cumulative bin weights
    std::vector<std::array<int, kBins>> bin_sign;  // sign of n . v per bin
    bool any_visible = false;
};

SliceCache build_slice(const SyntheticScene& scene, const SplineSegment& traj, const std::vector<Vec3>& board,
                       double t_us) {
    SliceCache cache;
    const auto n = board.size();
    cache.circle_cdf.assign(n, 0.0);
    cache.bin_cdf.assign(n, {});
    cache.bin_sign.assign(n, {});
    const double h = 250.0;
    const double t0 = std::max(traj.t_begin(), t_us - h);
    const double t1 = std::min(traj.t_end(), t_us + h);
    const Pose pose = evaluate(traj, t_us);
    const Pose pose0 = evaluate(traj, t0);
    const Pose pose1 = evaluate(traj, t1);
    const double r = scene.pattern.circle_radius;
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        // Local affine model of the projected circle: image point c + J r (cos, sin).
        Vec2 c, c0, c1, ex, ey;
        const bool projected = project_board(pose, scene.intrinsics_gt, board[s], c) &&
                               project_board(pose0, scene.intrinsics_gt, board[s], c0) &&
                               project_board(pose1, scene.intrinsics_gt, board[s], c1) &&
                               project_board(pose, scene.intrinsics_gt, board[s] + Vec3(r, 0.0, 0.0), ex) &&
                               project_board(pose, scene.intrinsics_gt, board[s] + Vec3(0.0, r, 0.0), ey);
        double weight = 0.0;
        if (projected) {
            Eigen::Matrix2d j;
            j.col(0) = ex - c;
            j.col(1) = ey - c;
            const double hx = j.row(0).norm() + 1.0;
            const double hy = j.row(1).norm() + 1.0;
            const bool visible = scene.sensor.contains(c.x() - hx, c.y() - hy) &&
                                 scene.sensor.contains(c.x() + hx, c.y() + hy);
            const double orient = j.determinant() > 0.0 ? 1.0 : -1.0;
            if (visible) {
                cache.any_visible = true;
                const Vec2 v = (c1 - c0) / ((t1 - t0) * 1e-6);
                // Rounding noise of a static pose is not motion.
                const bool moving = v.norm() >= 1e-6;
                for (int b = 0; moving && b < kBins; ++b) {
                    const double theta = 2.0 * M_PI * (b + 0.5) / kBins;
                    const Vec2 tangent = j * Vec2(-std::sin(theta), std::cos(theta));
                    const Vec2 normal = orient * Vec2(tangent.y(), -tangent.x()).normalized();
                    const double nv = normal.dot(v);
                    weight += std::abs(nv);
                    cache.bin_cdf[s][static_cast<std::size_t>(b)] = weight;
                    cache.bin_sign[s][static_cast<std::size_t>(b)] = nv > 0.0 ? 1 : -1;
                }
            }
        }
        total += weight;
        cache.circle_cdf[s] = total;
    }
    return cache;
}

struct ChunkOutput {
    std::vector<Event> events;
    std::size_t signal = 0;
    std::size_t clutter = 0;
    bool any_visible = false;
};

ChunkOutput generate_chunk(const SyntheticScene& scene, const SplineSegment& traj, const std::vector<Vec3>& board,
                           double t_begin_us, double t_end_us, std::uint64_t seed) {
    ChunkOutput out;
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(scene.event_rate * 1e-6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double r = scene.pattern.circle_radius;

    long cached_slice = -1;
    SliceCache cache;
    double t = t_begin_us;
    while (true) {
        t += gap(rng);
        if (t >= t_end_us) break;
        const long slice = static_cast<long>(std::floor(t / kSliceUs));
        if (slice != cached_slice) {
            cache = build_slice(scene, traj, board, std::clamp((slice + 0.5) * kSliceUs, traj.t_begin(), traj.t_end()));
            cached_slice = slice;
            out.any_visible = out.any_visible || cache.any_visible;
        }
        const double total = cache.circle_cdf.back();
        if (!(total > 1e-9)) continue;
        const double pick_c = unit(rng) * total;
        const auto s = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(std::upper_bound(cache.circle_cdf.begin(), cache.circle_cdf.end(), pick_c) -
                                         cache.circle_cdf.begin(),
                                     static_cast<std::ptrdiff_t>(board.size()) - 1));
        const auto& bins = cache.bin_cdf[s];
        const double pick_b = unit(rng) * bins.back();
        const auto b = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(std::upper_bound(bins.begin(), bins.end(), pick_b) - bins.begin(), kBins - 1));
        const double theta = 2.0 * M_PI * (static_cast<double>(b) + unit(rng)) / kBins;
        const double jx = gauss(rng), jy = gauss(rng), jt = gauss(rng);

        Vec2 pixel;
        const Pose pose = evaluate(traj, t);
        if (!project_board(pose, scene.intrinsics_gt, board[s] + r * Vec3(std::cos(theta), std::sin(theta), 0.0), pixel)) {
            continue;
        }
        pixel += scene.noise.pixel_jitter * Vec2(jx, jy);
        const double px = std::round(pixel.x());
        const double py = std::round(pixel.y());
        if (!scene.sensor.contains(px, py)) continue;
        Event e;
        e.t = std::max<std::int64_t>(0, std::llround(t + scene.noise.timestamp_jitter_us * jt));
        e.x = static_cast<std::uint16_t>(px);
        e.y = static_cast<std::uint16_t>(py);
        // Dark dot on a bright background: the leading edge darkens.
        e.polarity = static_cast<std::int8_t>(cache.bin_sign[s][b] > 0 ? -1 : 1);
        out.events.push_back(e);
    }
    out.signal = out.events.size();

    const auto clutter = static_cast<std::size_t>(std::llround(scene.noise.clutter_fraction * static_cast<double>(out.signal)));
    std::uniform_int_distribution<int> ux(0, scene.sensor.width - 1), uy(0, scene.sensor.height - 1), up(0, 1);
    for (std::size_t i = 0; i < clutter; ++i) {
        Event e;
        e.t = std::llround(t_begin_us + unit(rng) * (t_end_us - t_begin_us));
        e.x = static_cast<std::uint16_t>(ux(rng));
        e.y = static_cast<std::uint16_t>(uy(rng));
        e.polarity = static_cast<std::int8_t>(up(rng) ? 1 : -1);
        out.events.push_back(e);
    }
    out.clutter = clutter;
    return out;
}

}  // namespace

SyntheticOutput generate(const SyntheticScene& scene) {
    scene.pattern.validate();
    if (scene.duration_s < 0.0 || !(scene.event_rate > 0.0)) throw ValidationError("invalid scene timing");
    check_validity(scene.intrinsics_gt, scene.sensor);
    SyntheticOutput out;
    out.trajectory = ground_truth_trajectory(scene);
    if (out.trajectory.empty()) return out;
    const auto& traj = out.trajectory.front();
    const auto board = board_points(scene.pattern);

    const double end_us = scene.duration_s * 1e6;
    for (double t = 0.0; t <= end_us + 1e-6; t += 1000.0) out.gt_poses.push_back({t, evaluate(traj, t)});

    const auto chunks = static_cast<std::size_t>(std::ceil(scene.duration_s));
    std::vector<ChunkOutput> parts(chunks);
    parallel_chunks(chunks, static_cast<int>(std::thread::hardware_concurrency()), [&](std::size_t c) {
        const double b = static_cast<double>(c) * 1e6;
        const double e = std::min(end_us, static_cast<double>(c + 1) * 1e6);
        parts[c] = generate_chunk(scene, traj, board, b, e, splitmix(scene.seed ^ splitmix(c + 1)));
    });
    bool any_visible = false;
    for (auto& p : parts) {
        out.events.insert(out.events.end(), p.events.begin(), p.events.end());
        out.signal_events += p.signal;
        out.clutter_events += p.clutter;
        any_visible = any_visible || p.any_visible;
    }
    if (!any_visible) throw ValidationError("pattern is out of view for the whole sequence");
    std::stable_sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    return out;
}

void write_pose_log(const std::filesystem::path& path, const std::vector<TimedPose>& poses) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "# t_us tx ty tz qx qy qz qw\n";
    char line[256];
    for (const auto& p : poses) {
        const Quat q = p.pose.quaternion();
        std::snprintf(line, sizeof line, "%.0f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", p.t_us, p.pose.translation.x(),
                      p.pose.translation.y(), p.pose.translation.z(), q.x(), q.y(), q.z(), q.w());
        out << line;
    }
}

std::vector<TimedPose> read_pose_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::vector<TimedPose> poses;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) throw ParseError("malformed pose line", number);
        const Quat q(qw, qx, qy, qz);
        if (q.norm() < 1e-9) throw ParseError("zero quaternion", number);
        poses.push_back({t, Pose::from(q, Vec3(tx, ty, tz))});
    }
    return poses;
}

}  // namespace evcal
