#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "tgseg/model.hpp"

namespace tgseg::detail {

nlohmann::ordered_json model_config_to_json(const ModelConfig& c);
/// Reads the mode, backbone and model keys of a root object over `c`.
void model_config_from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace tgseg::detail
