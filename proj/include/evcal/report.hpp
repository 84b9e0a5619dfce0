#pragma once

#include "evcal/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace evcal {

/// 8-bit RGB raster with a few drawing primitives for diagnostics.
class Image {
public:
    Image(int width, int height, std::array<std::uint8_t, 3> fill = {0, 0, 0});

    int width() const { return width_; }
    int height() const { return height_; }
    void set(int x, int y, std::array<std::uint8_t, 3> rgb);
    std::array<std::uint8_t, 3> get(int x, int y) const;
    void circle(const Vec2& center, double radius, std::array<std::uint8_t, 3> rgb);
    void cross(const Vec2& center, int half, std::array<std::uint8_t, 3> rgb);
    void fill_rect(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> rgb);
    const std::vector<std::uint8_t>& data() const { return data_; }

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> data_;
};

void write_png(const std::filesystem::path& path, const Image& image);

struct ReportSummary {
    std::size_t frame_images = 0;
    std::size_t skipped_frames = 0;
    std::vector<std::string> warnings;
};

/// Writes frame_NNNN.png per reference frame (events with detected, refit and
/// reprojected circles), residual_histogram.png, undistorted_features.png
/// and summary.txt into out_dir.
ReportSummary write_report(const CalibrationResult& result, std::span<const Event> events,
                           const SensorGeometry& sensor, const std::filesystem::path& out_dir);

}  // namespace evcal
