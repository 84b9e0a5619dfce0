#include "evcal/scene_io.hpp"

#include <algorithm>
#include <initializer_list>

namespace evcal {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& section) {
    if (!j.is_object()) throw ValidationError("scene section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            throw ValidationError("unknown scene key '" + section + "." + key + "'");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& value) {
    if (!j.contains(key)) return;
    try {
        value = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene key '") + key + "': " + e.what());
    }
}

}  // namespace

json scene_to_json(const SimulationConfig& config) {
    const SyntheticScene& s = config.scene;
    const Intrinsics& k = s.intrinsics_gt;
    json j;
    j["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                       {"k", std::vector<double>(k.k.begin(), k.k.end())}};
    j["sensor"] = {{"width", s.sensor.width}, {"height", s.sensor.height}};
    j["pattern"] = {{"rows", s.pattern.rows},
                    {"cols", s.pattern.cols},
                    {"spacing", s.pattern.spacing},
                    {"circle_radius", s.pattern.circle_radius},
                    {"asymmetric", s.pattern.asymmetric}};
    j["noise"] = {{"pixel_jitter", s.noise.pixel_jitter},
                  {"clutter_fraction", s.noise.clutter_fraction},
                  {"timestamp_jitter_us", s.noise.timestamp_jitter_us}};
    j["motion"] = {{"distance", s.motion.distance},
                   {"distance_swing", s.motion.distance_swing},
                   {"tilt_deg", s.motion.tilt_deg},
                   {"roll_deg", s.motion.roll_deg},
                   {"offset_x", s.motion.offset_x},
                   {"offset_y", s.motion.offset_y},
                   {"speed_scale", s.motion.speed_scale},
                   {"stationary", s.motion.stationary}};
    j["duration_s"] = s.duration_s;
    j["event_rate"] = s.event_rate;
    j["control_interval_s"] = s.control_interval_s;
    j["seed"] = s.seed;
    j["format"] = config.format;
    return j;
}

SimulationConfig scene_from_json(const json& j) {
    SimulationConfig c;
    SyntheticScene& s = c.scene;
    check_keys(j, {"intrinsics", "sensor", "pattern", "noise", "motion", "duration_s", "event_rate",
                   "control_interval_s", "seed", "format", "preset"},
               "scene");
    if (j.contains("preset")) {
        std::string preset;
        read(j, "preset", preset);
        if (preset == "default") {
            s = default_scene();
        } else if (preset == "high_velocity") {
            s = high_velocity_scene();
        } else {
            throw ValidationError("unknown scene preset '" + preset + "'");
        }
    }
    if (j.contains("intrinsics")) {
        const auto& i = j["intrinsics"];
        check_keys(i, {"fx", "fy", "cx", "cy", "k"}, "intrinsics");
        read(i, "fx", s.intrinsics_gt.fx);
        read(i, "fy", s.intrinsics_gt.fy);
        read(i, "cx", s.intrinsics_gt.cx);
        read(i, "cy", s.intrinsics_gt.cy);
        if (i.contains("k")) {
            std::vector<double> k;
            read(i, "k", k);
            if (k.size() > 5) throw ValidationError("at most five distortion coefficients");
            s.intrinsics_gt.k = {};
            std::copy(k.begin(), k.end(), s.intrinsics_gt.k.begin());
        }
    }
    if (j.contains("sensor")) {
        const auto& i = j["sensor"];
        check_keys(i, {"width", "height"}, "sensor");
        read(i, "width", s.sensor.width);
        read(i, "height", s.sensor.height);
    }
    if (j.contains("pattern")) {
        const auto& i = j["pattern"];
        check_keys(i, {"rows", "cols", "spacing", "circle_radius", "asymmetric"}, "pattern");
        read(i, "rows", s.pattern.rows);
        read(i, "cols", s.pattern.cols);
        read(i, "spacing", s.pattern.spacing);
        read(i, "circle_radius", s.pattern.circle_radius);
        read(i, "asymmetric", s.pattern.asymmetric);
    }
    if (j.contains("noise")) {
        const auto& i = j["noise"];
        check_keys(i, {"pixel_jitter", "clutter_fraction", "timestamp_jitter_us"}, "noise");
        read(i, "pixel_jitter", s.noise.pixel_jitter);
        read(i, "clutter_fraction", s.noise.clutter_fraction);
        read(i, "timestamp_jitter_us", s.noise.timestamp_jitter_us);
    }
    if (j.contains("motion")) {
        const auto& i = j["motion"];
        check_keys(i, {"distance", "distance_swing", "tilt_deg", "roll_deg", "offset_x", "offset_y", "speed_scale",
                       "stationary"},
                   "motion");
        read(i, "distance", s.motion.distance);
        read(i, "distance_swing", s.motion.distance_swing);
        read(i, "tilt_deg", s.motion.tilt_deg);
        read(i, "roll_deg", s.motion.roll_deg);
        read(i, "offset_x", s.motion.offset_x);
        read(i, "offset_y", s.motion.offset_y);
        read(i, "speed_scale", s.motion.speed_scale);
        read(i, "stationary", s.motion.stationary);
    }
    read(j, "duration_s", s.duration_s);
    read(j, "event_rate", s.event_rate);
    read(j, "control_interval_s", s.control_interval_s);
    read(j, "seed", s.seed);
    read(j, "format", c.format);
    if (c.format != "csv" && c.format != "binary") throw ValidationError("format must be csv or binary");
    if (s.noise.pixel_jitter < 0.0 || s.noise.clutter_fraction < 0.0 || s.noise.timestamp_jitter_us < 0.0) {
        throw ValidationError("noise levels must be non-negative");
    }
    if (!(s.control_interval_s > 0.0)) throw ValidationError("control_interval_s must be positive");
    return c;
}

}  // namespace evcal
