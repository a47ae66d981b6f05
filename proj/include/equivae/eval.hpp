#pragma once

#include <string>
#include <vector>

#include "equivae/data.hpp"
#include "equivae/image_io.hpp"
#include "equivae/model.hpp"
#include "equivae/optimizer.hpp"

namespace equivae {

struct ClusterMeans {
    int64_t m_used = 0;
    std::vector<std::vector<double>> mean_per_class;  // K x D_r
    std::vector<int64_t> count_per_class;

    int classes() const { return static_cast<int>(mean_per_class.size()); }
    bool empty() const { return mean_per_class.empty(); }
};

/// Per-class mean of encode_invariant over every class member, each member
/// contributing one m-sized complementary draw (no exclusion; this runs on
/// a trained model). Pass ordering is fixed: classes ascending, members in
/// pool order. member_cap > 0 trims each class to its first member_cap
/// members, which the per-epoch validation metric uses to stay cheap.
ClusterMeans compute_cluster_means(const EquiVae& model, const Dataset& dataset,
                                   const ClassPool& pools, int64_t m, Rng& rng,
                                   int64_t member_cap = 0);

/// p(label = y | x) = softmax_y(-||f(x) - mean_y||^2); [B, K].
Tensor distance_classify(const EquiVae& model, const Tensor& x, const ClusterMeans& means);

struct ClassificationReport {
    double error_rate = 0.0;
    int64_t evaluated = 0;
    std::vector<std::vector<int64_t>> confusion;  // [true][predicted]
};

ClassificationReport classify_report_distance(const EquiVae& model, const Dataset& dataset,
                                              const std::vector<int64_t>& ids,
                                              const ClusterMeans& means);

struct HeadConfig {
    int64_t epochs = 60;
    int64_t batch = 32;
    double lr = 1e-3;
    double dropout = 0.5;
    std::vector<int64_t> widths{128, 64};
    uint64_t seed = 0;
};

/// Dropout classifier head trained on frozen invariant embeddings f(x).
ClassificationReport train_embedding_head(const EquiVae& model, const Dataset& dataset,
                                          const std::vector<int64_t>& train_ids,
                                          const std::vector<int64_t>& test_ids,
                                          const HeadConfig& config);

/// End-to-end benchmark: the invariant-encoder architecture with two
/// dropout layers and a K-way softmax output, trained from scratch on the
/// given labelled ids only.
ClassificationReport train_benchmark_classifier(const ModelConfig& arch, const Dataset& dataset,
                                                const std::vector<int64_t>& train_ids,
                                                const std::vector<int64_t>& test_ids,
                                                const HeadConfig& config);

/// One column per class, n rows of decode(mean_y, v ~ N(0, I)).
ImageGrid generate_prior_samples(const EquiVae& model, const ClusterMeans& means,
                                 int64_t per_class, Rng& rng);

/// Linear path between the posterior means of two same-class images at
/// fixed class latent; one row of `steps` frames.
ImageGrid interpolate(const EquiVae& model, const ClusterMeans& means, const Dataset& dataset,
                      int64_t id_a, int64_t id_b, int64_t steps);

/// Cell (i, j) = decode(mean_i, v_j) with v_j the posterior mean of the
/// class-j example: rows vary class, columns vary style. The diagonal is
/// exactly the per-example reconstruction.
ImageGrid style_transfer_grid(const EquiVae& model, const ClusterMeans& means,
                              const Dataset& dataset,
                              const std::vector<int64_t>& one_per_class);

/// decode(mean_label, v) over an evenly spaced grid v in [-range, range]^2;
/// requires D_v == 2.
ImageGrid latent_grid(const EquiVae& model, const ClusterMeans& means, int label, double range,
                      int64_t resolution);

/// decode(mean_{y}, posterior_mean) for one example; the plain
/// reconstruction the style grid's diagonal must match bit-exactly.
Tensor reconstruct(const EquiVae& model, const ClusterMeans& means, const Dataset& dataset,
                   int64_t id);

/// CSV of id, label, the D_r invariant embedding and the D_v posterior
/// mean (computed against r = f(x)) for every id, header included.
void export_embeddings(const EquiVae& model, const Dataset& dataset,
                       const std::vector<int64_t>& ids, const std::string& path);

}  // namespace equivae
