#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "equivae/data.hpp"
#include "equivae/eval.hpp"
#include "equivae/model.hpp"

namespace equivae {

struct Checkpoint {
    ModelConfig model;
    ParameterStore params;
    std::optional<ClusterMeans> cluster_means;
    std::optional<Standardization> preproc;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Length-prefixed binary container with a JSON header followed by every
/// tensor's raw 64-bit values in sorted name order. Round-trips are
/// bit-exact and saving a loaded checkpoint reproduces the file byte for
/// byte.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace equivae
