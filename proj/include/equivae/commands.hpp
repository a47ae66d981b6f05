#pragma once

#include <string>
#include <vector>

#include "equivae/checkpoint.hpp"
#include "equivae/config.hpp"

namespace equivae {

struct LoadedData {
    Dataset dataset;
    DatasetSplit split;
    std::optional<Standardization> preproc;
};

/// Builds the dataset the config describes, resolves the architecture's
/// data-dependent fields (classes, image geometry) into `config`, applies
/// the semi split and, in Gaussian mode, standardisation. Pass existing
/// stats (from a checkpoint) to apply them instead of refitting.
LoadedData load_dataset(RunConfig& config,
                        const std::optional<Standardization>& stats = std::nullopt);

struct TrainResult {
    std::string checkpoint_path;
    std::string metrics_path;
    std::string snapshot_path;
    std::vector<MetricsRecord> records;
};

/// Full training run: resolves the config, echoes the snapshot, trains,
/// computes cluster means and writes checkpoint + per-epoch metrics log.
TrainResult cmd_train(RunConfig config);

/// Cluster means on the train split, distance classification of the test
/// split; writes and returns the report.
nlohmann::json cmd_eval(RunConfig config, const std::string& checkpoint_path,
                        const std::string& report_path);

/// Writes the requested probe's image grid(s); returns the file paths.
std::vector<std::string> cmd_generate(RunConfig config, const std::string& checkpoint_path,
                                      const std::string& probe, const std::string& out_dir);

/// Embedding CSV for one split (train|unlabelled|validation|test).
std::string cmd_embed(RunConfig config, const std::string& checkpoint_path,
                      const std::string& split_name, const std::string& out_path);

}  // namespace equivae
