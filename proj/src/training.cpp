#include "equivae/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace equivae {

std::vector<int64_t> default_batch_milestones(int64_t epochs) {
    std::vector<int64_t> out;
    for (int64_t i = 1; i <= 3; ++i) {
        const int64_t milestone = epochs * i / 4;
        if (milestone > 0 && (out.empty() || out.back() != milestone)) {
            out.push_back(milestone);
        }
    }
    return out;
}

int64_t batch_schedule(int64_t epoch, const TrainConfig& config) {
    if (epoch < 0) {
        throw ContractError("epoch must be non-negative");
    }
    const std::vector<int64_t> milestones = config.batch_double_epochs.empty()
                                                ? default_batch_milestones(config.epochs)
                                                : config.batch_double_epochs;
    int64_t batch = config.initial_batch;
    for (int64_t m : milestones) {
        if (m <= epoch) {
            batch *= 2;
        }
    }
    return std::min(batch, config.batch_cap);
}

namespace {

std::vector<std::string> trainable_groups(TrainMode mode, bool classifier_on) {
    std::vector<std::string> groups{"inv", "cov", "dec"};
    if (mode == TrainMode::Semi || classifier_on) {
        groups.push_back("ypost");
    }
    return groups;
}

Tensor draw_normal(Rng& rng, int64_t rows, int64_t cols) {
    std::vector<double> values(static_cast<size_t>(rows * cols));
    for (double& v : values) {
        v = rng.normal();
    }
    return Tensor::from_values(Shape{rows, cols}, std::move(values));
}

}  // namespace

Trainer::Trainer(EquiVae& model, TrainConfig config, TrainMode mode, const Dataset& dataset,
                 const DatasetSplit& split, uint64_t seed)
    : model_(model),
      config_(std::move(config)),
      mode_(mode),
      dataset_(dataset),
      split_(split),
      pools_(ClassPool::build(dataset, split.train_labelled)),
      prior_(empirical_prior(pools_)),
      classifier_on_(config_.classifier_term.value_or(mode == TrainMode::Semi)),
      adam_(AdamConfig{config_.learning_rate, 0.9, 0.999, 1e-8},
            model.parameter_names(trainable_groups(mode, classifier_on_))),
      train_rng_(Rng(seed).sub_stream("train")),
      eval_base_(Rng(seed).sub_stream("epoch-eval")),
      labelled_cycle_(split.train_labelled) {
    if (split.train_labelled.empty()) {
        throw ContractError("training requires a non-empty labelled set");
    }
}

void Trainer::apply_step(const Tensor& total) {
    Tensor loss = negate(total);
    if (!std::isfinite(loss.item())) {
        throw NonFiniteError("objective diverged");
    }
    backward(loss);
    adam_.step(model_.params());
    for (const auto& name : model_.params().names()) {
        model_.params().get(name).clear_grad();
    }
}

void Trainer::accumulate(const ElboTerms& terms, MetricsMeans& sums, int64_t& count) const {
    sums.reconstruction += terms.reconstruction.item();
    sums.kl_v += terms.kl_v.item();
    sums.log_prior_y += terms.log_prior_y.item();
    sums.kl_y += terms.kl_y.item();
    sums.classifier_term += terms.classifier_term.item();
    sums.total += terms.total.item();
    count += terms.count;
}

MetricsRecord Trainer::run_epoch(int64_t epoch) {
    const auto start = std::chrono::steady_clock::now();
    const int64_t batch_size = batch_schedule(epoch, config_);
    MetricsMeans sums;
    int64_t examples = 0;

    auto next_labelled_chunk = [&](int64_t want) {
        std::vector<int64_t> chunk;
        chunk.reserve(static_cast<size_t>(want));
        while (static_cast<int64_t>(chunk.size()) < want) {
            if (labelled_cursor_ == 0) {
                labelled_cycle_ = split_.train_labelled;
                train_rng_.shuffle(labelled_cycle_);
            }
            chunk.push_back(labelled_cycle_[labelled_cursor_]);
            labelled_cursor_ = (labelled_cursor_ + 1) % labelled_cycle_.size();
        }
        return chunk;
    };

    // With no unlabelled data the semi objective degenerates to the labelled
    // sum; share the supervised pass so the equivalence is exact.
    if (mode_ == TrainMode::Supervised || split_.train_unlabelled.empty()) {
        std::vector<int64_t> order = split_.train_labelled;
        train_rng_.shuffle(order);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(batch_size));
            std::vector<int64_t> ids(order.begin() + static_cast<int64_t>(at),
                                     order.begin() + static_cast<int64_t>(end));
            LabelledBatch batch =
                make_labelled_batch(dataset_, pools_, ids, config_.m_max, train_rng_);
            Tensor eps = draw_normal(train_rng_, static_cast<int64_t>(ids.size()),
                                     model_.config().d_v);
            ElboTerms terms = labelled_elbo(model_, batch, eps, prior_, classifier_on_,
                                            /*training=*/true, &train_rng_);
            apply_step(terms.total);
            accumulate(terms, sums, examples);
        }
    } else {
        const auto& unlab = split_.train_unlabelled;
        const int64_t k = static_cast<int64_t>(prior_.probs.size());
        const size_t steps =
            unlab.empty()
                ? (split_.train_labelled.size() + static_cast<size_t>(batch_size) - 1) /
                      static_cast<size_t>(batch_size)
                : (unlab.size() + static_cast<size_t>(batch_size) - 1) /
                      static_cast<size_t>(batch_size);
        std::vector<int64_t> unlab_order = unlab;
        train_rng_.shuffle(unlab_order);

        for (size_t step = 0; step < steps; ++step) {
            const int64_t lab_want =
                std::min<int64_t>(batch_size,
                                  static_cast<int64_t>(split_.train_labelled.size()));
            std::optional<LabelledBatch> lab_batch;
            Tensor lab_eps;
            if (lab_want > 0) {
                lab_batch = make_labelled_batch(dataset_, pools_, next_labelled_chunk(lab_want),
                                                config_.m_max, train_rng_);
                lab_eps = draw_normal(train_rng_, lab_want, model_.config().d_v);
            }

            std::optional<UnlabelledBatch> unlab_batch;
            std::vector<int64_t> m_per_class;
            std::vector<Tensor> eps_per_class;
            if (!unlab_order.empty()) {
                const size_t at = step * static_cast<size_t>(batch_size);
                const size_t end =
                    std::min(unlab_order.size(), at + static_cast<size_t>(batch_size));
                if (at < end) {
                    std::vector<int64_t> ids(unlab_order.begin() + static_cast<int64_t>(at),
                                             unlab_order.begin() + static_cast<int64_t>(end));
                    unlab_batch = make_unlabelled_batch(dataset_, ids);
                    for (int64_t y = 0; y < k; ++y) {
                        m_per_class.push_back(1 + train_rng_.uniform_int(config_.m_max));
                    }
                    for (int64_t y = 0; y < k; ++y) {
                        eps_per_class.push_back(draw_normal(
                            train_rng_, static_cast<int64_t>(ids.size()), model_.config().d_v));
                    }
                }
            }

            SemiObjective objective = semi_supervised_objective(
                model_, lab_batch, lab_eps, unlab_batch, dataset_, pools_, m_per_class,
                eps_per_class, prior_, train_rng_, /*training=*/true, &train_rng_);
            apply_step(objective.total);
            if (objective.labelled) {
                accumulate(*objective.labelled, sums, examples);
            }
            if (objective.unlabelled) {
                accumulate(*objective.unlabelled, sums, examples);
            }
        }
    }

    MetricsRecord record;
    record.epoch = epoch;
    record.batch_size = batch_size;
    record.examples = examples;
    if (examples > 0) {
        const double n = static_cast<double>(examples);
        record.means = MetricsMeans{sums.reconstruction / n, sums.kl_v / n,
                                    sums.log_prior_y / n,   sums.kl_y / n,
                                    sums.classifier_term / n, sums.total / n};
    }
    if (!split_.validation.empty()) {
        Rng eval_rng = eval_base_.sub_stream(std::to_string(epoch));
        ClusterMeans means =
            compute_cluster_means(model_, dataset_, pools_, config_.validation_cluster_m,
                                  eval_rng, config_.validation_member_cap);
        ClassificationReport report =
            classify_report_distance(model_, dataset_, split_.validation, means);
        record.validation_accuracy = 1.0 - report.error_rate;
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

}  // namespace equivae
