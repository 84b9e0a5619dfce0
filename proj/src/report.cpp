#include "evcal/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace evcal {

using Rgb = std::array<std::uint8_t, 3>;

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
    data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) std::copy(fill.begin(), fill.end(), data_.begin() + static_cast<std::ptrdiff_t>(i));
}

void Image::set(int x, int y, Rgb rgb) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    std::copy(rgb.begin(), rgb.end(), data_.begin() + static_cast<std::ptrdiff_t>(i));
}

Rgb Image::get(int x, int y) const {
    const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::circle(const Vec2& c, double radius, Rgb rgb) {
    const int steps = std::max(16, static_cast<int>(8.0 * radius));
    for (int i = 0; i < steps; ++i) {
        const double a = 2.0 * M_PI * i / steps;
        set(static_cast<int>(std::lround(c.x() + radius * std::cos(a))),
            static_cast<int>(std::lround(c.y() + radius * std::sin(a))), rgb);
    }
}

void Image::cross(const Vec2& c, int half, Rgb rgb) {
    const int x = static_cast<int>(std::lround(c.x()));
    const int y = static_cast<int>(std::lround(c.y()));
    for (int d = -half; d <= half; ++d) {
        set(x + d, y, rgb);
        set(x, y + d, rgb);
    }
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb rgb) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
        for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, rgb);
}

void write_png(const std::filesystem::path& path, const Image& image) {
    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!file) throw ValidationError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ValidationError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ValidationError("failed to encode " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const auto stride = static_cast<std::size_t>(image.width()) * 3;
    for (int y = 0; y < image.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(image.data().data() + static_cast<std::size_t>(y) * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

constexpr Rgb kPositive{235, 90, 70};
constexpr Rgb kNegative{70, 130, 235};
constexpr Rgb kDetected{60, 220, 60};
constexpr Rgb kRefit{250, 220, 40};
constexpr Rgb kReprojected{230, 60, 230};

Image histogram_image(const ResidualStats& stats) {
    const int w = 480, h = 240, margin = 10;
    Image img(w, h, {255, 255, 255});
    if (stats.histogram.empty()) return img;
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(stats.histogram.begin(), stats.histogram.end()));
    const int bins = static_cast<int>(stats.histogram.size());
    const double bar = static_cast<double>(w - 2 * margin) / bins;
    for (int b = 0; b < bins; ++b) {
        const int height = static_cast<int>(std::lround((h - 2 * margin) * static_cast<double>(stats.histogram[static_cast<std::size_t>(b)]) / static_cast<double>(peak)));
        const int x0 = margin + static_cast<int>(b * bar);
        const int x1 = margin + static_cast<int>((b + 1) * bar) - 1;
        if (height > 0) img.fill_rect(x0, h - margin - height, x1, h - margin - 1, {60, 90, 160});
    }
    img.fill_rect(margin, h - margin, w - margin, h - margin, {0, 0, 0});
    return img;
}

}  // namespace

ReportSummary write_report(const CalibrationResult& result, std::span<const Event> events,
                           const SensorGeometry& sensor, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ReportSummary summary;

    for (std::size_t i = 0; i < result.frames.size(); ++i) {
        const auto& f = result.frames[i];
        const auto lo = std::lower_bound(events.begin(), events.end(), f.t_start,
                                         [](const Event& e, std::int64_t t) { return e.t < t; });
        const auto hi = std::upper_bound(events.begin(), events.end(), f.t_end,
                                         [](std::int64_t t, const Event& e) { return t < e.t; });
        if (lo == hi) {
            summary.warnings.push_back("frame " + std::to_string(i) + ": no events in its window, skipped");
            ++summary.skipped_frames;
            continue;
        }
        Image img(sensor.width, sensor.height, {40, 40, 40});
        for (auto it = lo; it != hi; ++it) img.set(it->x, it->y, it->polarity > 0 ? kPositive : kNegative);
        for (const auto& d : f.detected) img.cross(d, 2, kDetected);
        for (const auto& rf : f.rectified) {
            img.circle(rf.reprojected, rf.reprojected_radius, kReprojected);
            img.circle(rf.center, rf.radius, kRefit);
        }
        char name[64];
        std::snprintf(name, sizeof name, "frame_%04zu.png", i);
        write_png(out_dir / name, img);
        ++summary.frame_images;
    }

    write_png(out_dir / "residual_histogram.png", histogram_image(result.residuals));

    // Refit centers mapped through the calibrated model onto an ideal pinhole image.
    Image grid(sensor.width, sensor.height, {255, 255, 255});
    const Intrinsics& k = result.intrinsics;
    for (const auto& f : result.frames) {
        if (f.status != "accepted") continue;
        for (const auto& rf : f.rectified) {
            const Vec3 n = normalize(k, rf.center);
            grid.cross(Vec2(k.fx * n.x() + k.cx, k.fy * n.y() + k.cy), 1, {20, 20, 20});
        }
    }
    write_png(out_dir / "undistorted_features.png", grid);

    std::ofstream txt(out_dir / "summary.txt");
    txt << "frames " << result.frames.size() << "\n";
    txt << "frame_images " << summary.frame_images << "\n";
    txt << "skipped_frames " << summary.skipped_frames << "\n";
    txt << "segments " << result.segments.size() << "\n";
    char line[256];
    std::snprintf(line, sizeof line, "intrinsics fx=%.6f fy=%.6f cx=%.6f cy=%.6f k=[%.6g %.6g %.6g %.6g %.6g]\n", k.fx,
                  k.fy, k.cx, k.cy, k.k[0], k.k[1], k.k[2], k.k[3], k.k[4]);
    txt << line;
    std::snprintf(line, sizeof line, "residual_rms_m %.9g\nresidual_count %zu\n", result.residuals.rms,
                  result.residuals.count);
    txt << line;
    txt << "correspondences_initial " << result.initial_correspondences << "\n";
    txt << "correspondences_augmented " << result.augmented_correspondences << "\n";
    for (const auto& w : summary.warnings) txt << "warning " << w << "\n";
    return summary;
}

}  // namespace evcal
