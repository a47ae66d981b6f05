#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "equivae/rng.hpp"
#include "equivae/tensor.hpp"

namespace equivae {

struct LabelledExample {
    int64_t id = 0;  // unique within the dataset; equals its store index
    int label = 0;
    std::vector<double> pixels;  // C*H*W, row-major
};

struct Dataset {
    int classes = 0;
    int64_t channels = 1;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<LabelledExample> examples;

    int64_t pixel_count() const { return channels * height * width; }
    const LabelledExample& by_id(int64_t id) const;
};

struct DatasetSplit {
    std::vector<int64_t> train_labelled;
    std::vector<int64_t> train_unlabelled;
    std::vector<int64_t> validation;
    std::vector<int64_t> test;
};

/// Per-class id lists over a labelled id set. Complete partition by label;
/// every class that appears must have at least two members (training pools
/// need one left after excluding the target; evaluation-time pools, which
/// never exclude, may relax this with require_pairs = false).
class ClassPool {
public:
    static ClassPool build(const Dataset& dataset, const std::vector<int64_t>& ids,
                           bool require_pairs = true);

    const std::vector<int64_t>& members(int label) const;
    int classes() const { return static_cast<int>(by_class_.size()); }
    int64_t total() const;

private:
    std::vector<std::vector<int64_t>> by_class_;
};

struct ClassPrior {
    std::vector<double> probs;
};

/// Relative class frequencies of the pool.
ClassPrior empirical_prior(const ClassPool& pool);

/// m draws from the class-`label` pool, never returning exclude_id: without
/// replacement while the (post-exclusion) pool is large enough, with
/// replacement otherwise.
std::vector<int64_t> sample_complementary(const ClassPool& pool, int label,
                                          std::optional<int64_t> exclude_id, int64_t m,
                                          Rng& rng);

Tensor stack_images(const Dataset& dataset, const std::vector<int64_t>& ids);

struct LabelledBatch {
    Tensor x;  // [B,C,H,W]
    std::vector<int> labels;
    std::vector<int64_t> ids;
    Tensor comp;                    // [sum(segments),C,H,W]
    std::vector<int64_t> comp_ids;  // ids behind comp, for the exclusion audit
    std::vector<int64_t> segments;  // complementary-set size per example
};

struct UnlabelledBatch {
    Tensor x;
    std::vector<int64_t> ids;
};

/// Per example: m ~ uniform{1..m_max}, then an m-sized complementary draw
/// from its own class pool with the example itself excluded.
LabelledBatch make_labelled_batch(const Dataset& dataset, const ClassPool& pool,
                                  const std::vector<int64_t>& ids, int64_t m_max, Rng& rng);

UnlabelledBatch make_unlabelled_batch(const Dataset& dataset, const std::vector<int64_t>& ids);

struct SyntheticSpec {
    int classes = 4;
    int64_t image_size = 16;
    int64_t train = 2000;
    int64_t validation = 200;
    int64_t test = 500;
    double rotation_deg = 30.0;
    int64_t translate_px = 2;
    double intensity_lo = 0.8;
    double intensity_hi = 1.2;
    uint64_t seed = 0;
    /// One base image per class; filled with built-in glyphs when empty.
    std::vector<std::vector<double>> prototypes;
};

struct SyntheticData {
    Dataset dataset;
    DatasetSplit split;
};

/// Each example is its class prototype under a random smooth transform:
/// bilinear rotation, integer translation, intensity scale. Deterministic
/// per seed.
SyntheticData synth_generate(const SyntheticSpec& spec);

std::vector<double> synthetic_prototype(int label, int64_t size);
std::vector<double> rotate_bilinear(const std::vector<double>& img, int64_t h, int64_t w,
                                    double radians);

/// Stratified labelled subset (equal per class, remainder to the lowest
/// class indices); everything else in train_labelled becomes unlabelled.
DatasetSplit make_semi_split(const Dataset& dataset, const DatasetSplit& base,
                             int64_t n_labelled, Rng& rng);

struct Standardization {
    double mean = 0.0;
    double std_dev = 1.0;
};

/// Fits pooled pixel mean/std on fit_ids and shifts/scales every example in
/// place (Gaussian-decoder preprocessing).
Standardization standardize(Dataset& dataset, const std::vector<int64_t>& fit_ids);
void apply_standardization(Dataset& dataset, const Standardization& stats);

}  // namespace equivae
