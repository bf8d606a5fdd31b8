// JSON (de)serialization of the model architecture, shared by checkpoints and
// the run configuration.
#pragma once

#include "stam/model.hpp"

#include <json.hpp>

namespace stam {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
// Strict: unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace stam
