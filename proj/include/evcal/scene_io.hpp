#pragma once

#include "evcal/synthetic.hpp"

#include <json.hpp>

#include <string>

namespace evcal {

struct SimulationConfig {
    SyntheticScene scene = default_scene();
    std::string format = "csv";  // csv | binary
};

nlohmann::json scene_to_json(const SimulationConfig& config);
/// Defaults overridden by the keys present; unknown keys are rejected.
SimulationConfig scene_from_json(const nlohmann::json& j);

}  // namespace evcal
