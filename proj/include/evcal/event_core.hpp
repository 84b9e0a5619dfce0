#pragma once

#include "evcal/common.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace evcal {

/// One asynchronous brightness change. Timestamps are microseconds.
struct Event {
    std::int64_t t = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t polarity = 1;  // +1 brighter, -1 darker

    Vec2 pixel() const { return {static_cast<double>(x), static_cast<double>(y)}; }
    friend bool operator==(const Event&, const Event&) = default;
};

enum class EventFormat { csv, binary };

/// `.evb` selects the packed binary layout, anything else is CSV.
EventFormat format_from_path(const std::filesystem::path& path);

struct LoadOptions {
    // Out-of-order timestamps up to this many microseconds are repaired by a
    // stable sort; larger disorder is reported as an error.
    std::int64_t max_disorder_us = 100;
};

std::vector<Event> load_events(const std::filesystem::path& path, EventFormat format,
                               const SensorGeometry& sensor, const LoadOptions& options = {});
void save_events(const std::filesystem::path& path, EventFormat format,
                 std::span<const Event> events);

/// Adaptive windowing parameters. Durations are multiples of `tau_us`.
struct WindowingConfig {
    std::int64_t tau_us = 15000;
    double min_mult = 1.0;
    double max_mult = 4.0;
    double gap_mult = 2.0;
    std::size_t max_events = 30000;
    double growth_step = 0.5;  // right-edge growth per failed attempt, in tau

    void validate() const;
};

struct EventWindow {
    std::int64_t t_start = 0;
    std::int64_t t_end = 0;
    std::size_t first_index = 0;  // index of events.front() in the source stream
    std::vector<Event> events;

    double t_ref() const { return 0.5 * (static_cast<double>(t_start) + static_cast<double>(t_end)); }
    std::int64_t duration() const { return t_end - t_start; }
};

/// Returns true when the pattern was found in the candidate window. Every
/// successful call is immediately followed by acceptance of that window, so a
/// detector may record its own output and rely on the order matching
/// `WindowingResult::windows`.
using WindowDetector = std::function<bool(const EventWindow&)>;

struct WindowingResult {
    std::vector<EventWindow> windows;
    std::size_t abandoned = 0;
    std::size_t detector_calls = 0;
};

WindowingResult window_events(std::span<const Event> stream, const WindowingConfig& config,
                              const WindowDetector& detector);

}  // namespace evcal
