#include "evcal/event_core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace evcal {

namespace {

constexpr std::size_t kBinaryRecordSize = 13;

bool parse_int(std::string_view field, std::int64_t& out) {
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
    if (field.empty()) return false;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(',', pos);
        fields.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return fields;
}

void check_bounds(const Event& e, const SensorGeometry& sensor, std::size_t record) {
    if (e.x >= sensor.width || e.y >= sensor.height) {
        throw ValidationError("event at (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                              ") outside " + std::to_string(sensor.width) + "x" +
                              std::to_string(sensor.height) + " sensor, record " +
                              std::to_string(record));
    }
}

void restore_order(std::vector<Event>& events, std::int64_t max_disorder_us) {
    std::int64_t running_max = events.empty() ? 0 : events.front().t;
    bool sorted = true;
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].t < running_max) {
            sorted = false;
            if (running_max - events[i].t > max_disorder_us) {
                throw ValidationError("timestamp disorder of " + std::to_string(running_max - events[i].t) +
                                      " us at record " + std::to_string(i + 1));
            }
        }
        running_max = std::max(running_max, events[i].t);
    }
    if (!sorted) {
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }
}

std::vector<Event> load_csv(const std::filesystem::path& path, const SensorGeometry& sensor) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    std::vector<Event> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto fields = split_commas(line);
        std::array<std::int64_t, 4> v{};
        bool numeric = fields.size() == 4;
        for (std::size_t i = 0; numeric && i < 4; ++i) numeric = parse_int(fields[i], v[i]);
        if (!numeric) {
            // A header is only allowed as the first line and must start non-numerically.
            std::int64_t probe = 0;
            if (line_no == 1 && !fields.empty() && !parse_int(fields[0], probe)) continue;
            throw ParseError("malformed event record '" + line + "'", line_no);
        }
        if (v[1] < 0 || v[2] < 0 || v[1] > 0xFFFF || v[2] > 0xFFFF) {
            throw ValidationError("negative or oversized pixel coordinate at line " + std::to_string(line_no));
        }
        if (v[3] != 0 && v[3] != 1) throw ParseError("polarity must be 0 or 1", line_no);
        Event e{v[0], static_cast<std::uint16_t>(v[1]), static_cast<std::uint16_t>(v[2]),
                static_cast<std::int8_t>(v[3] == 1 ? 1 : -1)};
        check_bounds(e, sensor, line_no);
        events.push_back(e);
    }
    return events;
}

std::vector<Event> load_binary(const std::filesystem::path& path, const SensorGeometry& sensor) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % kBinaryRecordSize != 0) {
        throw ParseError("truncated binary event file", bytes.size() / kBinaryRecordSize + 1);
    }
    std::vector<Event> events;
    events.reserve(bytes.size() / kBinaryRecordSize);
    for (std::size_t off = 0, rec = 1; off < bytes.size(); off += kBinaryRecordSize, ++rec) {
        const unsigned char* r = bytes.data() + off;
        std::uint64_t t = 0;
        for (int i = 7; i >= 0; --i) t = (t << 8) | r[i];
        const auto x = static_cast<std::uint16_t>(r[8] | (r[9] << 8));
        const auto y = static_cast<std::uint16_t>(r[10] | (r[11] << 8));
        const auto p = static_cast<std::int8_t>(r[12]);
        if (p != 1 && p != -1) throw ParseError("polarity must be +1 or -1", rec);
        Event e{static_cast<std::int64_t>(t), x, y, p};
        check_bounds(e, sensor, rec);
        events.push_back(e);
    }
    return events;
}

}  // namespace

EventFormat format_from_path(const std::filesystem::path& path) {
    return path.extension() == ".evb" ? EventFormat::binary : EventFormat::csv;
}

std::vector<Event> load_events(const std::filesystem::path& path, EventFormat format,
                               const SensorGeometry& sensor, const LoadOptions& options) {
    auto events = format == EventFormat::csv ? load_csv(path, sensor) : load_binary(path, sensor);
    restore_order(events, options.max_disorder_us);
    return events;
}

void save_events(const std::filesystem::path& path, EventFormat format, std::span<const Event> events) {
    if (format == EventFormat::csv) {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        std::string buf;
        buf.reserve(events.size() * 20);
        for (const auto& e : events) {
            buf += std::to_string(e.t);
            buf += ',';
            buf += std::to_string(e.x);
            buf += ',';
            buf += std::to_string(e.y);
            buf += e.polarity > 0 ? ",1\n" : ",0\n";
        }
        out << buf;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::vector<unsigned char> bytes(events.size() * kBinaryRecordSize);
    for (std::size_t i = 0; i < events.size(); ++i) {
        unsigned char* r = bytes.data() + i * kBinaryRecordSize;
        auto t = static_cast<std::uint64_t>(events[i].t);
        for (int b = 0; b < 8; ++b) r[b] = static_cast<unsigned char>((t >> (8 * b)) & 0xFF);
        r[8] = static_cast<unsigned char>(events[i].x & 0xFF);
        r[9] = static_cast<unsigned char>(events[i].x >> 8);
        r[10] = static_cast<unsigned char>(events[i].y & 0xFF);
        r[11] = static_cast<unsigned char>(events[i].y >> 8);
        r[12] = static_cast<unsigned char>(events[i].polarity);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void WindowingConfig::validate() const {
    if (tau_us <= 0 || min_mult <= 0.0 || max_mult <= min_mult || gap_mult <= 0.0 || max_events == 0 ||
        growth_step <= 0.0) {
        throw ValidationError("invalid windowing configuration");
    }
}

WindowingResult window_events(std::span<const Event> stream, const WindowingConfig& config,
                              const WindowDetector& detector) {
    config.validate();
    WindowingResult result;
    const double tau = static_cast<double>(config.tau_us);
    const auto min_len = static_cast<std::int64_t>(std::ceil(config.min_mult * tau));
    const auto max_len = static_cast<std::int64_t>(std::floor(config.max_mult * tau));
    const auto gap = static_cast<std::int64_t>(std::ceil(config.gap_mult * tau));

    auto first_at_or_after = [&](std::int64_t t) {
        return static_cast<std::size_t>(
            std::lower_bound(stream.begin(), stream.end(), t,
                             [](const Event& e, std::int64_t v) { return e.t < v; }) -
            stream.begin());
    };
    auto end_at_or_before = [&](std::int64_t t) {
        return static_cast<std::size_t>(
            std::upper_bound(stream.begin(), stream.end(), t,
                             [](std::int64_t v, const Event& e) { return v < e.t; }) -
            stream.begin());
    };

    std::size_t begin = 0;
    while (begin < stream.size()) {
        const std::int64_t t0 = stream[begin].t;
        bool accepted = false;
        for (double mult = config.min_mult;; mult += config.growth_step) {
            const auto horizon = std::min(t0 + static_cast<std::int64_t>(std::llround(mult * tau)), t0 + max_len);
            const std::size_t end = end_at_or_before(horizon);
            if (end - begin > config.max_events) break;
            const std::int64_t span = stream[end - 1].t - t0;
            if (span >= min_len) {
                EventWindow window;
                window.t_start = t0;
                window.t_end = stream[end - 1].t;
                window.first_index = begin;
                window.events.assign(stream.begin() + static_cast<std::ptrdiff_t>(begin),
                                     stream.begin() + static_cast<std::ptrdiff_t>(end));
                ++result.detector_calls;
                if (detector(window)) {
                    const std::int64_t next = window.t_end + gap;
                    result.windows.push_back(std::move(window));
                    begin = first_at_or_after(next);
                    accepted = true;
                    break;
                }
            }
            if (horizon >= t0 + max_len || end == stream.size()) break;
        }
        if (!accepted) {
            ++result.abandoned;
            begin = first_at_or_after(t0 + gap);
        }
    }
    return result;
}

}  // namespace evcal
