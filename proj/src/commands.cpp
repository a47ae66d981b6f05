#include "equivae/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "equivae/idx.hpp"
#include "equivae/logging.hpp"

namespace equivae {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void resolve_arch_from_dataset(RunConfig& config, const Dataset& dataset) {
    config.arch.classes = dataset.classes;
    config.arch.channels = dataset.channels;
    config.arch.height = dataset.height;
    config.arch.width = dataset.width;
}

LoadedData load_idx_dataset(const IdxPaths& paths) {
    LoadedData data;
    IdxDataset loaded = load_idx_with_dims(paths.train_images, paths.train_labels);
    auto train = std::move(loaded.examples);
    auto test = load_idx(paths.test_images, paths.test_labels);

    int max_label = 0;
    for (const auto& ex : train) max_label = std::max(max_label, ex.label);
    for (const auto& ex : test) max_label = std::max(max_label, ex.label);

    if (train.empty()) {
        throw ContractError("idx training set is empty");
    }
    data.dataset.classes = max_label + 1;
    data.dataset.channels = 1;
    data.dataset.height = loaded.rows;
    data.dataset.width = loaded.cols;

    int64_t next_id = 0;
    const int64_t n_train = static_cast<int64_t>(train.size());
    int64_t validation_count = std::min<int64_t>(paths.validation_count, n_train);
    int64_t train_count = n_train - validation_count;
    if (paths.train_limit > 0) {
        train_count = std::min(train_count, paths.train_limit);
    }
    for (int64_t i = 0; i < n_train; ++i) {
        auto ex = std::move(train[static_cast<size_t>(i)]);
        ex.id = next_id++;
        const bool in_validation = i >= n_train - validation_count;
        if (in_validation) {
            data.split.validation.push_back(ex.id);
        } else if (i < train_count) {
            data.split.train_labelled.push_back(ex.id);
        } else {
            // Train rows beyond the configured limit stay out of the run.
            next_id--;
            continue;
        }
        data.dataset.examples.push_back(std::move(ex));
    }
    for (auto& ex : test) {
        ex.id = next_id++;
        data.split.test.push_back(ex.id);
        data.dataset.examples.push_back(std::move(ex));
    }
    return data;
}

std::string metrics_line(const MetricsRecord& record) {
    json j;
    j["epoch"] = record.epoch;
    j["batch_size"] = record.batch_size;
    j["examples"] = record.examples;
    j["reconstruction"] = record.means.reconstruction;
    j["kl_v"] = record.means.kl_v;
    j["log_prior_y"] = record.means.log_prior_y;
    j["kl_y"] = record.means.kl_y;
    j["classifier_term"] = record.means.classifier_term;
    j["elbo"] = record.means.total;
    if (record.validation_accuracy) {
        j["validation_accuracy"] = *record.validation_accuracy;
    }
    return j.dump();
}

EquiVae model_from_checkpoint(const Checkpoint& checkpoint) {
    return EquiVae(checkpoint.model, checkpoint.params);
}

std::vector<int64_t> split_ids(const LoadedData& data, const std::string& name) {
    if (name == "train") return data.split.train_labelled;
    if (name == "unlabelled") return data.split.train_unlabelled;
    if (name == "validation") return data.split.validation;
    if (name == "test") return data.split.test;
    throw ContractError("unknown split '" + name +
                        "' (valid: train, unlabelled, validation, test)");
}

/// First examples (lowest id) of the given class in validation, falling
/// back to test when validation is empty.
std::vector<int64_t> probe_examples(const LoadedData& data, int label, size_t want) {
    const auto& source = data.split.validation.empty() ? data.split.test
                                                       : data.split.validation;
    std::vector<int64_t> out;
    for (int64_t id : source) {
        if (data.dataset.by_id(id).label == label) {
            out.push_back(id);
            if (out.size() == want) break;
        }
    }
    if (out.size() < want) {
        throw ContractError("not enough class-" + std::to_string(label) +
                            " examples for the probe");
    }
    return out;
}

void unstandardize_grid(ImageGrid& grid, const std::optional<Standardization>& stats) {
    if (!stats) return;
    for (double& v : grid.pixels) {
        v = v * stats->std_dev + stats->mean;
    }
}

}  // namespace

LoadedData load_dataset(RunConfig& config, const std::optional<Standardization>& stats) {
    LoadedData data;
    if (config.dataset_kind == DatasetKind::Synthetic) {
        SyntheticSpec spec = config.synthetic;
        if (spec.seed == 0) {
            spec.seed = Rng(config.seed).sub_stream("data").next_u64();
        }
        config.synthetic = spec;
        SyntheticData synth = synth_generate(spec);
        data.dataset = std::move(synth.dataset);
        data.split = std::move(synth.split);
    } else {
        data = load_idx_dataset(config.idx);
    }
    resolve_arch_from_dataset(config, data.dataset);

    if (config.mode == TrainMode::Semi) {
        Rng split_rng = Rng(config.seed).sub_stream("split");
        data.split = make_semi_split(data.dataset, data.split, config.n_labelled, split_rng);
    }
    if (config.arch.likelihood == Likelihood::Gaussian) {
        if (stats) {
            apply_standardization(data.dataset, *stats);
            data.preproc = stats;
        } else {
            std::vector<int64_t> fit_ids = data.split.train_labelled;
            fit_ids.insert(fit_ids.end(), data.split.train_unlabelled.begin(),
                           data.split.train_unlabelled.end());
            data.preproc = standardize(data.dataset, fit_ids);
        }
    }
    return data;
}

TrainResult cmd_train(RunConfig config) {
    init_logging();
    LoadedData data = load_dataset(config);

    fs::create_directories(config.output_dir);
    TrainResult result;
    result.snapshot_path = (fs::path(config.output_dir) / "config.resolved.json").string();
    result.metrics_path = (fs::path(config.output_dir) / "metrics.jsonl").string();
    result.checkpoint_path = (fs::path(config.output_dir) / "model.ckpt").string();

    const json resolved = run_config_to_json(config);
    {
        std::ofstream snapshot(result.snapshot_path);
        snapshot << resolved.dump(2) << "\n";
    }
    log_message(LogLevel::Info, "resolved config: " + resolved.dump());

    Rng init_rng = Rng(config.seed).sub_stream("init");
    EquiVae model(config.arch, init_rng);
    log_message(LogLevel::Info,
                "parameters: " + std::to_string(model.params().total_parameters()));

    Trainer trainer(model, config.training, config.mode, data.dataset, data.split,
                    config.seed);

    std::ofstream metrics(result.metrics_path, std::ios::trunc);
    if (!metrics) {
        throw IoError("cannot write metrics log");
    }
    int64_t completed = -1;
    try {
        for (int64_t epoch = 0; epoch < config.training.epochs; ++epoch) {
            MetricsRecord record = trainer.run_epoch(epoch);
            result.records.push_back(record);
            metrics << metrics_line(record) << "\n";
            metrics.flush();
            completed = epoch;
            std::ostringstream line;
            line << "epoch " << epoch << " elbo/ex " << record.means.total << " recon "
                 << record.means.reconstruction << " kl_v " << record.means.kl_v;
            if (record.validation_accuracy) {
                line << " val_acc " << *record.validation_accuracy;
            }
            line << " batch " << record.batch_size << " (" << record.wall_seconds << "s)";
            log_message(LogLevel::Info, line.str());
        }
    } catch (const NonFiniteError& e) {
        metrics << json{{"aborted_after_epoch", completed}, {"error", e.what()}}.dump()
                << "\n";
        log_message(LogLevel::Error, std::string("training diverged after epoch ") +
                                         std::to_string(completed) + ": " + e.what());
        throw;
    }

    Rng eval_rng = Rng(config.seed).sub_stream("eval");
    ClusterMeans means = compute_cluster_means(model, data.dataset, trainer.pools(),
                                               config.evaluation.cluster_m, eval_rng);
    Checkpoint checkpoint{config.arch, model.params(), means, data.preproc};
    save_checkpoint(checkpoint, result.checkpoint_path);
    log_message(LogLevel::Info, "checkpoint written to " + result.checkpoint_path);
    return result;
}

json cmd_eval(RunConfig config, const std::string& checkpoint_path,
              const std::string& report_path) {
    init_logging();
    Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    config.arch = checkpoint.model;
    LoadedData data = load_dataset(config, checkpoint.preproc);
    log_message(LogLevel::Info, "resolved config: " + run_config_to_json(config).dump());
    EquiVae model = model_from_checkpoint(checkpoint);

    if (data.split.test.empty()) {
        throw ContractError("test split is empty");
    }
    Rng eval_rng = Rng(config.seed).sub_stream("eval");
    ClassPool pools = ClassPool::build(data.dataset, data.split.train_labelled);
    ClusterMeans means = compute_cluster_means(model, data.dataset, pools,
                                               config.evaluation.cluster_m, eval_rng);
    ClassificationReport report =
        classify_report_distance(model, data.dataset, data.split.test, means);

    json j;
    j["error_rate"] = report.error_rate;
    j["evaluated"] = report.evaluated;
    j["confusion"] = report.confusion;
    if (!report_path.empty()) {
        fs::create_directories(fs::path(report_path).parent_path().empty()
                                   ? fs::path(".")
                                   : fs::path(report_path).parent_path());
        std::ofstream out(report_path);
        out << j.dump(2) << "\n";
    }
    log_message(LogLevel::Info, "distance-classifier error rate " +
                                    std::to_string(report.error_rate) + " on " +
                                    std::to_string(report.evaluated) + " examples");
    return j;
}

std::vector<std::string> cmd_generate(RunConfig config, const std::string& checkpoint_path,
                                      const std::string& probe, const std::string& out_dir) {
    init_logging();
    static const std::vector<std::string> valid{"prior-samples", "interpolate", "style-grid",
                                                "latent-grid"};
    if (std::find(valid.begin(), valid.end(), probe) == valid.end()) {
        std::string names;
        for (const auto& v : valid) {
            names += names.empty() ? v : ", " + v;
        }
        throw ContractError("unknown probe '" + probe + "' (valid: " + names + ")");
    }

    Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    config.arch = checkpoint.model;
    LoadedData data = load_dataset(config, checkpoint.preproc);
    log_message(LogLevel::Info, "resolved config: " + run_config_to_json(config).dump());
    EquiVae model = model_from_checkpoint(checkpoint);

    ClusterMeans means;
    if (checkpoint.cluster_means && !checkpoint.cluster_means->empty()) {
        means = *checkpoint.cluster_means;
    } else {
        Rng eval_rng = Rng(config.seed).sub_stream("eval");
        ClassPool pools = ClassPool::build(data.dataset, data.split.train_labelled);
        means = compute_cluster_means(model, data.dataset, pools, config.evaluation.cluster_m,
                                      eval_rng);
    }

    fs::create_directories(out_dir);
    const std::string ext = config.arch.channels == 3 ? ".ppm" : ".pgm";
    std::vector<std::string> written;
    auto emit = [&](ImageGrid grid, const std::string& stem) {
        unstandardize_grid(grid, checkpoint.preproc);
        const std::string path = (fs::path(out_dir) / (stem + ext)).string();
        write_image(grid, path);
        written.push_back(path);
    };

    if (probe == "prior-samples") {
        Rng probe_rng = Rng(config.seed).sub_stream("probe");
        emit(generate_prior_samples(model, means, config.evaluation.prior_samples_per_class,
                                    probe_rng),
             "prior_samples");
    } else if (probe == "interpolate") {
        const int label = static_cast<int>(config.evaluation.interpolate_class);
        auto ids = probe_examples(data, label, 2);
        emit(interpolate(model, means, data.dataset, ids[0], ids[1],
                         config.evaluation.interpolate_steps),
             "interpolation_class" + std::to_string(label));
    } else if (probe == "style-grid") {
        std::vector<int64_t> one_per_class;
        for (int k = 0; k < data.dataset.classes; ++k) {
            one_per_class.push_back(probe_examples(data, k, 1)[0]);
        }
        emit(style_transfer_grid(model, means, data.dataset, one_per_class), "style_grid");
    } else {  // latent-grid
        const int label = static_cast<int>(config.evaluation.latent_grid_class);
        emit(latent_grid(model, means, label, config.evaluation.latent_grid_range,
                         config.evaluation.latent_grid_resolution),
             "latent_grid_class" + std::to_string(label));
    }
    for (const auto& path : written) {
        log_message(LogLevel::Info, "wrote " + path);
    }
    return written;
}

std::string cmd_embed(RunConfig config, const std::string& checkpoint_path,
                      const std::string& split_name, const std::string& out_path) {
    init_logging();
    Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    config.arch = checkpoint.model;
    LoadedData data = load_dataset(config, checkpoint.preproc);
    log_message(LogLevel::Info, "resolved config: " + run_config_to_json(config).dump());
    EquiVae model = model_from_checkpoint(checkpoint);

    const auto ids = split_ids(data, split_name);
    const fs::path path(out_path);
    if (!path.parent_path().empty()) {
        fs::create_directories(path.parent_path());
    }
    export_embeddings(model, data.dataset, ids, out_path);
    log_message(LogLevel::Info, "wrote " + out_path);
    return out_path;
}

}  // namespace equivae
