// Run configuration: one JSON document holding the model architecture,
// training protocol, seeds, and optional data paths. Every field has a
// default except the paths. Unknown keys are rejected. STAM_SEED in the
// environment overrides every seed (for CI reproducibility).
#pragma once

#include "stam/model.hpp"
#include "stam/train.hpp"

#include <string>

namespace stam {

struct RunConfig {
    ModelConfig model;  // n_nodes stays 0 until bound to a dataset
    TrainConfig train;
    std::string data_dir;  // no defaults
    std::string truth;
    std::string out;
};

RunConfig default_run_config();
// Empty path -> defaults. Applies STAM_SEED when present.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);

// FNV-1a over the canonical serialized config; hex string for metrics.json.
std::string config_hash(const RunConfig& cfg);

}  // namespace stam
