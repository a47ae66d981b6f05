#pragma once

#include <string>

#include <json.hpp>

#include "equivae/data.hpp"
#include "equivae/model.hpp"
#include "equivae/training.hpp"

namespace equivae {

struct IdxPaths {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    int64_t validation_count = 5000;
    int64_t train_limit = 0;  // 0 keeps everything
};

enum class DatasetKind { Synthetic, Idx };

struct EvalConfig {
    int64_t cluster_m = 5;
    std::vector<std::string> probes{"prior-samples", "interpolate", "style-grid",
                                    "latent-grid"};
    int64_t prior_samples_per_class = 8;
    int64_t interpolate_steps = 8;
    int64_t interpolate_class = 0;
    double latent_grid_range = 2.0;
    int64_t latent_grid_resolution = 9;
    int64_t latent_grid_class = 0;
    int64_t classifier_epochs = 60;
};

/// One self-contained run description. Parsing is strict: unknown keys are
/// rejected anywhere in the document, and value constraints are checked
/// before any work starts.
struct RunConfig {
    uint64_t seed = 1;
    TrainMode mode = TrainMode::Supervised;
    int64_t n_labelled = 0;  // semi mode only
    std::string output_dir = "runs/equivae";
    DatasetKind dataset_kind = DatasetKind::Synthetic;
    SyntheticSpec synthetic;
    IdxPaths idx;
    ModelConfig arch;  // classes/channels/height/width resolve at dataset load
    TrainConfig training;
    EvalConfig evaluation;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Fully resolved document (defaults filled in); re-parsing it reproduces
/// the run.
nlohmann::json run_config_to_json(const RunConfig& config);

}  // namespace equivae
