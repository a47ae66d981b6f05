#pragma once

#include <optional>

#include "equivae/eval.hpp"
#include "equivae/objectives.hpp"
#include "equivae/optimizer.hpp"

namespace equivae {

struct TrainConfig {
    int64_t epochs = 30;
    int64_t initial_batch = 32;
    /// Epochs at which the batch size doubles; empty means quarters of the
    /// epoch budget.
    std::vector<int64_t> batch_double_epochs;
    int64_t batch_cap = 256;
    int64_t m_max = 4;
    double learning_rate = 1e-3;
    /// Defaults to on in semi-supervised mode, off otherwise.
    std::optional<bool> classifier_term;
    int64_t validation_cluster_m = 5;
    /// Per-class member cap for the per-epoch validation metric; the full
    /// means are computed once at the end of training.
    int64_t validation_member_cap = 50;
};

std::vector<int64_t> default_batch_milestones(int64_t epochs);

/// initial_batch doubled once per milestone already passed, capped.
int64_t batch_schedule(int64_t epoch, const TrainConfig& config);

struct MetricsMeans {
    double reconstruction = 0;
    double kl_v = 0;
    double log_prior_y = 0;
    double kl_y = 0;
    double classifier_term = 0;
    double total = 0;
};

struct MetricsRecord {
    int64_t epoch = 0;
    int64_t batch_size = 0;
    int64_t examples = 0;
    MetricsMeans means;  // per-example means over the epoch
    std::optional<double> validation_accuracy;
    double wall_seconds = 0;  // reported on the console, never logged to file
};

enum class TrainMode { Supervised, Semi };

/// One optimisation run: owns the optimizer state, the class pools and the
/// prior; run_epoch makes one pass over the training data.
class Trainer {
public:
    Trainer(EquiVae& model, TrainConfig config, TrainMode mode, const Dataset& dataset,
            const DatasetSplit& split, uint64_t seed);

    MetricsRecord run_epoch(int64_t epoch);

    const ClassPool& pools() const { return pools_; }
    const ClassPrior& prior() const { return prior_; }
    Adam& optimizer() { return adam_; }
    bool classifier_term_on() const { return classifier_on_; }
    TrainMode mode() const { return mode_; }

private:
    void apply_step(const Tensor& total);
    void accumulate(const ElboTerms& terms, MetricsMeans& sums, int64_t& count) const;

    EquiVae& model_;
    TrainConfig config_;
    TrainMode mode_;
    const Dataset& dataset_;
    const DatasetSplit& split_;
    ClassPool pools_;
    ClassPrior prior_;
    bool classifier_on_;
    Adam adam_;
    Rng train_rng_;
    Rng eval_base_;
    std::vector<int64_t> labelled_cycle_;
    size_t labelled_cursor_ = 0;
};

}  // namespace equivae
