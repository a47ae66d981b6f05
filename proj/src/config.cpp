#include "equivae/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "equivae/checkpoint.hpp"

namespace equivae {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

void require_positive(int64_t v, const std::string& what) {
    if (v < 1) {
        throw ConfigError(what + " must be >= 1, got " + std::to_string(v));
    }
}

bool power_of_two(int64_t v) {
    return v > 0 && (v & (v - 1)) == 0;
}

std::vector<int64_t> widths_or(const json& j, const char* key,
                               const std::vector<int64_t>& fallback) {
    auto w = get_or<std::vector<int64_t>>(j, key, fallback);
    if (w.size() != 2 || w[0] < 1 || w[1] < 1) {
        throw ConfigError(std::string(key) + " must hold two positive widths");
    }
    return w;
}

SyntheticSpec parse_synthetic(const json& j) {
    check_keys(j, "dataset.synthetic",
               {"classes", "image_size", "train", "validation", "test", "rotation_deg",
                "translate_px", "intensity_lo", "intensity_hi", "seed"});
    SyntheticSpec spec;
    spec.classes = static_cast<int>(get_or<int64_t>(j, "classes", 4));
    spec.image_size = get_or<int64_t>(j, "image_size", 16);
    spec.train = get_or<int64_t>(j, "train", 2000);
    spec.validation = get_or<int64_t>(j, "validation", 200);
    spec.test = get_or<int64_t>(j, "test", 500);
    spec.rotation_deg = get_or<double>(j, "rotation_deg", 30.0);
    spec.translate_px = get_or<int64_t>(j, "translate_px", 2);
    spec.intensity_lo = get_or<double>(j, "intensity_lo", 0.8);
    spec.intensity_hi = get_or<double>(j, "intensity_hi", 1.2);
    spec.seed = get_or<uint64_t>(j, "seed", 0);
    require_positive(spec.classes, "dataset.synthetic.classes");
    require_positive(spec.image_size, "dataset.synthetic.image_size");
    require_positive(spec.train, "dataset.synthetic.train");
    if (spec.translate_px < 0 || !std::isfinite(spec.rotation_deg) ||
        !std::isfinite(spec.intensity_lo) || !std::isfinite(spec.intensity_hi)) {
        throw ConfigError("dataset.synthetic transform ranges must be finite");
    }
    return spec;
}

IdxPaths parse_idx(const json& j) {
    check_keys(j, "dataset.idx",
               {"train_images", "train_labels", "test_images", "test_labels",
                "validation_count", "train_limit"});
    IdxPaths paths;
    for (const char* key : {"train_images", "train_labels", "test_images", "test_labels"}) {
        if (!j.contains(key)) {
            throw ConfigError(std::string("dataset.idx.") + key + " is required");
        }
    }
    paths.train_images = j.at("train_images").get<std::string>();
    paths.train_labels = j.at("train_labels").get<std::string>();
    paths.test_images = j.at("test_images").get<std::string>();
    paths.test_labels = j.at("test_labels").get<std::string>();
    paths.validation_count = get_or<int64_t>(j, "validation_count", 5000);
    paths.train_limit = get_or<int64_t>(j, "train_limit", 0);
    if (paths.validation_count < 0 || paths.train_limit < 0) {
        throw ConfigError("dataset.idx counts must be non-negative");
    }
    return paths;
}

ModelConfig parse_architecture(const json& j) {
    // channels/height/width/classes are resolved from the dataset; they are
    // accepted here so a resolved snapshot re-parses cleanly.
    check_keys(j, "architecture",
               {"backbone", "mlp_hidden", "d_r", "d_v", "head_widths", "decoder_widths",
                "classifier_widths", "r_proj_width", "likelihood", "dropout_rate", "channels",
                "height", "width", "classes"});
    ModelConfig arch;
    arch.channels = get_or<int64_t>(j, "channels", 1);
    arch.height = get_or<int64_t>(j, "height", 28);
    arch.width = get_or<int64_t>(j, "width", 28);
    arch.classes = get_or<int64_t>(j, "classes", 10);
    const std::string backbone = get_or<std::string>(j, "backbone", "mlp");
    if (backbone == "mlp") {
        arch.backbone = BackboneKind::Mlp;
    } else if (backbone == "conv") {
        arch.backbone = BackboneKind::Conv;
    } else {
        throw ConfigError("architecture.backbone must be 'mlp' or 'conv'");
    }
    arch.mlp_hidden = get_or<std::vector<int64_t>>(j, "mlp_hidden", {256, 128});
    if (arch.mlp_hidden.empty()) {
        throw ConfigError("architecture.mlp_hidden must be non-empty");
    }
    for (int64_t h : arch.mlp_hidden) {
        require_positive(h, "architecture.mlp_hidden entry");
    }
    arch.d_r = get_or<int64_t>(j, "d_r", 16);
    arch.d_v = get_or<int64_t>(j, "d_v", 16);
    require_positive(arch.d_r, "architecture.d_r");
    require_positive(arch.d_v, "architecture.d_v");

    // Dense widths follow the latent size: the defaults are halved when an
    // 8-dimensional latent is configured and no explicit widths are given.
    const bool halve = arch.d_r == 8;
    arch.head_widths =
        widths_or(j, "head_widths", halve ? std::vector<int64_t>{64, 32}
                                          : std::vector<int64_t>{128, 64});
    arch.decoder_widths =
        widths_or(j, "decoder_widths", halve ? std::vector<int64_t>{32, 64}
                                             : std::vector<int64_t>{64, 128});
    arch.classifier_widths = widths_or(j, "classifier_widths", {128, 64});
    arch.r_proj_width = get_or<int64_t>(j, "r_proj_width", halve ? 32 : 64);
    require_positive(arch.r_proj_width, "architecture.r_proj_width");

    const std::string likelihood = get_or<std::string>(j, "likelihood", "bernoulli");
    if (likelihood == "bernoulli") {
        arch.likelihood = Likelihood::Bernoulli;
    } else if (likelihood == "gaussian") {
        arch.likelihood = Likelihood::Gaussian;
    } else {
        throw ConfigError("architecture.likelihood must be 'bernoulli' or 'gaussian'");
    }
    arch.dropout_rate = get_or<double>(j, "dropout_rate", 0.5);
    if (arch.dropout_rate < 0.0 || arch.dropout_rate >= 1.0) {
        throw ConfigError("architecture.dropout_rate must be in [0, 1)");
    }
    return arch;
}

TrainConfig parse_training(const json& j) {
    check_keys(j, "training",
               {"epochs", "initial_batch", "batch_double_epochs", "batch_cap", "m_max",
                "learning_rate", "classifier_term", "validation_cluster_m",
                "validation_member_cap"});
    TrainConfig t;
    t.epochs = get_or<int64_t>(j, "epochs", 30);
    t.initial_batch = get_or<int64_t>(j, "initial_batch", 32);
    t.batch_double_epochs = get_or<std::vector<int64_t>>(j, "batch_double_epochs", {});
    t.batch_cap = get_or<int64_t>(j, "batch_cap", 256);
    t.m_max = get_or<int64_t>(j, "m_max", 4);
    t.learning_rate = get_or<double>(j, "learning_rate", 1e-3);
    if (j.contains("classifier_term")) {
        t.classifier_term = j.at("classifier_term").get<bool>();
    }
    t.validation_cluster_m = get_or<int64_t>(j, "validation_cluster_m", 5);
    t.validation_member_cap = get_or<int64_t>(j, "validation_member_cap", 50);

    require_positive(t.epochs, "training.epochs");
    if (t.initial_batch < 32 || !power_of_two(t.initial_batch)) {
        throw ConfigError("training.initial_batch must be a power of two >= 32");
    }
    if (!power_of_two(t.batch_cap) || t.batch_cap < t.initial_batch) {
        throw ConfigError("training.batch_cap must be a power of two >= initial_batch");
    }
    require_positive(t.m_max, "training.m_max");
    for (int64_t m : t.batch_double_epochs) {
        require_positive(m, "training.batch_double_epochs entry");
    }
    if (!(t.learning_rate > 0.0)) {
        throw ConfigError("training.learning_rate must be positive");
    }
    require_positive(t.validation_cluster_m, "training.validation_cluster_m");
    return t;
}

EvalConfig parse_evaluation(const json& j) {
    check_keys(j, "evaluation",
               {"cluster_m", "probes", "prior_samples_per_class", "interpolate_steps",
                "interpolate_class", "latent_grid_range", "latent_grid_resolution",
                "latent_grid_class", "classifier_epochs"});
    EvalConfig e;
    e.cluster_m = get_or<int64_t>(j, "cluster_m", 5);
    e.probes = get_or<std::vector<std::string>>(
        j, "probes", {"prior-samples", "interpolate", "style-grid", "latent-grid"});
    e.prior_samples_per_class = get_or<int64_t>(j, "prior_samples_per_class", 8);
    e.interpolate_steps = get_or<int64_t>(j, "interpolate_steps", 8);
    e.interpolate_class = get_or<int64_t>(j, "interpolate_class", 0);
    e.latent_grid_range = get_or<double>(j, "latent_grid_range", 2.0);
    e.latent_grid_resolution = get_or<int64_t>(j, "latent_grid_resolution", 9);
    e.latent_grid_class = get_or<int64_t>(j, "latent_grid_class", 0);
    e.classifier_epochs = get_or<int64_t>(j, "classifier_epochs", 60);
    require_positive(e.cluster_m, "evaluation.cluster_m");
    require_positive(e.prior_samples_per_class, "evaluation.prior_samples_per_class");
    require_positive(e.interpolate_steps, "evaluation.interpolate_steps");
    require_positive(e.latent_grid_resolution, "evaluation.latent_grid_resolution");
    require_positive(e.classifier_epochs, "evaluation.classifier_epochs");
    if (!(e.latent_grid_range > 0.0)) {
        throw ConfigError("evaluation.latent_grid_range must be positive");
    }
    static const std::set<std::string> known{"prior-samples", "interpolate", "style-grid",
                                             "latent-grid"};
    for (const auto& p : e.probes) {
        if (!known.count(p)) {
            throw ConfigError("unknown probe '" + p + "'");
        }
    }
    return e;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    check_keys(j, "config",
               {"seed", "mode", "n_labelled", "output_dir", "dataset", "architecture",
                "training", "evaluation"});
    RunConfig config;
    config.seed = get_or<uint64_t>(j, "seed", 1);
    const std::string mode = get_or<std::string>(j, "mode", "supervised");
    if (mode == "supervised") {
        config.mode = TrainMode::Supervised;
    } else if (mode == "semi") {
        config.mode = TrainMode::Semi;
    } else {
        throw ConfigError("mode must be 'supervised' or 'semi'");
    }
    config.n_labelled = get_or<int64_t>(j, "n_labelled", 0);
    if (config.mode == TrainMode::Semi && config.n_labelled < 2) {
        throw ConfigError("semi mode requires n_labelled");
    }
    config.output_dir = get_or<std::string>(j, "output_dir", "runs/equivae");

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d, "dataset", {"kind", "synthetic", "idx"});
        const std::string kind = get_or<std::string>(d, "kind", "synthetic");
        if (kind == "synthetic") {
            config.dataset_kind = DatasetKind::Synthetic;
            config.synthetic = parse_synthetic(d.contains("synthetic") ? d.at("synthetic")
                                                                       : json::object());
        } else if (kind == "idx") {
            config.dataset_kind = DatasetKind::Idx;
            if (!d.contains("idx")) {
                throw ConfigError("dataset.idx section is required for kind 'idx'");
            }
            config.idx = parse_idx(d.at("idx"));
        } else {
            throw ConfigError("dataset.kind must be 'synthetic' or 'idx'");
        }
    } else {
        config.synthetic = parse_synthetic(json::object());
    }

    config.arch = parse_architecture(j.contains("architecture") ? j.at("architecture")
                                                                : json::object());
    config.training =
        parse_training(j.contains("training") ? j.at("training") : json::object());
    config.evaluation =
        parse_evaluation(j.contains("evaluation") ? j.at("evaluation") : json::object());
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config '" + path + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_run_config(j);
}

json run_config_to_json(const RunConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["mode"] = config.mode == TrainMode::Supervised ? "supervised" : "semi";
    if (config.mode == TrainMode::Semi) {
        j["n_labelled"] = config.n_labelled;
    }
    j["output_dir"] = config.output_dir;

    json d;
    if (config.dataset_kind == DatasetKind::Synthetic) {
        d["kind"] = "synthetic";
        d["synthetic"] = {{"classes", config.synthetic.classes},
                          {"image_size", config.synthetic.image_size},
                          {"train", config.synthetic.train},
                          {"validation", config.synthetic.validation},
                          {"test", config.synthetic.test},
                          {"rotation_deg", config.synthetic.rotation_deg},
                          {"translate_px", config.synthetic.translate_px},
                          {"intensity_lo", config.synthetic.intensity_lo},
                          {"intensity_hi", config.synthetic.intensity_hi},
                          {"seed", config.synthetic.seed}};
    } else {
        d["kind"] = "idx";
        d["idx"] = {{"train_images", config.idx.train_images},
                    {"train_labels", config.idx.train_labels},
                    {"test_images", config.idx.test_images},
                    {"test_labels", config.idx.test_labels},
                    {"validation_count", config.idx.validation_count},
                    {"train_limit", config.idx.train_limit}};
    }
    j["dataset"] = d;

    json arch = model_config_to_json(config.arch);
    // These four resolve from the dataset; they are echoed for the record.
    j["architecture"] = arch;

    json t;
    t["epochs"] = config.training.epochs;
    t["initial_batch"] = config.training.initial_batch;
    t["batch_double_epochs"] = config.training.batch_double_epochs.empty()
                                   ? default_batch_milestones(config.training.epochs)
                                   : config.training.batch_double_epochs;
    t["batch_cap"] = config.training.batch_cap;
    t["m_max"] = config.training.m_max;
    t["learning_rate"] = config.training.learning_rate;
    t["classifier_term"] =
        config.training.classifier_term.value_or(config.mode == TrainMode::Semi);
    t["validation_cluster_m"] = config.training.validation_cluster_m;
    t["validation_member_cap"] = config.training.validation_member_cap;
    j["training"] = t;

    json e;
    e["cluster_m"] = config.evaluation.cluster_m;
    e["probes"] = config.evaluation.probes;
    e["prior_samples_per_class"] = config.evaluation.prior_samples_per_class;
    e["interpolate_steps"] = config.evaluation.interpolate_steps;
    e["interpolate_class"] = config.evaluation.interpolate_class;
    e["latent_grid_range"] = config.evaluation.latent_grid_range;
    e["latent_grid_resolution"] = config.evaluation.latent_grid_resolution;
    e["latent_grid_class"] = config.evaluation.latent_grid_class;
    e["classifier_epochs"] = config.evaluation.classifier_epochs;
    j["evaluation"] = e;
    return j;
}

}  // namespace equivae
