#include "equivae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace equivae {

namespace {

constexpr int64_t kChunk = 256;

std::vector<double> tensor_row(const Tensor& t, int64_t row) {
    const int64_t n = t.size() / t.extent(0);
    const auto& v = t.values();
    return std::vector<double>(v.begin() + row * n, v.begin() + (row + 1) * n);
}

Tensor row_tensor(const std::vector<double>& row) {
    return Tensor::from_values(Shape{1, static_cast<int64_t>(row.size())},
                               std::vector<double>(row));
}

/// Invariant embedding f(x) of many examples, chunked.
std::vector<std::vector<double>> embed_ids(const EquiVae& model, const Dataset& dataset,
                                           const std::vector<int64_t>& ids) {
    NoGradGuard no_grad;
    std::vector<std::vector<double>> out;
    out.reserve(ids.size());
    for (size_t at = 0; at < ids.size(); at += kChunk) {
        const size_t end = std::min(ids.size(), at + kChunk);
        std::vector<int64_t> chunk(ids.begin() + static_cast<int64_t>(at),
                                   ids.begin() + static_cast<int64_t>(end));
        Tensor f = model.invariant_embedding(stack_images(dataset, chunk));
        for (int64_t r = 0; r < f.extent(0); ++r) {
            out.push_back(tensor_row(f, r));
        }
    }
    return out;
}

int argmax_row(const Tensor& probs, int64_t row) {
    const int64_t k = probs.extent(1);
    int best = 0;
    double best_v = probs.values()[static_cast<size_t>(row * k)];
    for (int64_t j = 1; j < k; ++j) {
        const double v = probs.values()[static_cast<size_t>(row * k + j)];
        if (v > best_v) {
            best_v = v;
            best = static_cast<int>(j);
        }
    }
    return best;
}

struct HeadNet {
    ParameterStore store;
    DenseLayer h0, h1, out;
    double dropout_rate = 0.5;

    Tensor forward(const Tensor& x, bool training, Rng* rng) const {
        Tensor h = relu(h0.forward(x));
        if (training && rng) h = dropout(h, dropout_rate, true, *rng);
        h = relu(h1.forward(h));
        if (training && rng) h = dropout(h, dropout_rate, true, *rng);
        return softmax_rows(out.forward(h));
    }
};

void clear_all_grads(ParameterStore& store) {
    for (const auto& name : store.names()) {
        store.get(name).clear_grad();
    }
}

Tensor cross_entropy_sum(const Tensor& probs, const std::vector<int>& labels) {
    return negate(reduce_sum(log_guarded(gather_cols(probs, labels)), {0}));
}

ClassificationReport report_from_predictions(const std::vector<int>& truth,
                                             const std::vector<int>& predicted, int classes) {
    ClassificationReport report;
    report.evaluated = static_cast<int64_t>(truth.size());
    report.confusion.assign(static_cast<size_t>(classes),
                            std::vector<int64_t>(static_cast<size_t>(classes), 0));
    int64_t wrong = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        report.confusion[static_cast<size_t>(truth[i])][static_cast<size_t>(predicted[i])]++;
        if (truth[i] != predicted[i]) ++wrong;
    }
    report.error_rate =
        report.evaluated ? static_cast<double>(wrong) / static_cast<double>(report.evaluated)
                         : 0.0;
    return report;
}

}  // namespace

ClusterMeans compute_cluster_means(const EquiVae& model, const Dataset& dataset,
                                   const ClassPool& pools, int64_t m, Rng& rng,
                                   int64_t member_cap) {
    if (m < 1) {
        throw ContractError("cluster means need m >= 1");
    }
    NoGradGuard no_grad;
    ClusterMeans means;
    means.m_used = m;
    const int64_t d_r = model.config().d_r;
    for (int k = 0; k < pools.classes(); ++k) {
        std::vector<int64_t> members = pools.members(k);
        if (members.empty()) {
            throw ContractError("class " + std::to_string(k) + " is empty");
        }
        if (member_cap > 0 && static_cast<int64_t>(members.size()) > member_cap) {
            members.resize(static_cast<size_t>(member_cap));
        }
        std::vector<double> acc(static_cast<size_t>(d_r), 0.0);
        for (size_t at = 0; at < members.size(); at += kChunk) {
            const size_t end = std::min(members.size(), at + kChunk);
            std::vector<int64_t> comp_ids;
            std::vector<int64_t> segments;
            for (size_t i = at; i < end; ++i) {
                auto draw = sample_complementary(pools, k, std::nullopt, m, rng);
                comp_ids.insert(comp_ids.end(), draw.begin(), draw.end());
                segments.push_back(m);
            }
            Tensor r = model.encode_invariant(stack_images(dataset, comp_ids), segments);
            for (int64_t row = 0; row < r.extent(0); ++row) {
                for (int64_t d = 0; d < d_r; ++d) {
                    acc[static_cast<size_t>(d)] +=
                        r.values()[static_cast<size_t>(row * d_r + d)];
                }
            }
        }
        for (double& v : acc) {
            v /= static_cast<double>(members.size());
        }
        means.mean_per_class.push_back(std::move(acc));
        means.count_per_class.push_back(static_cast<int64_t>(members.size()));
    }
    return means;
}

Tensor distance_classify(const EquiVae& model, const Tensor& x, const ClusterMeans& means) {
    if (means.empty()) {
        throw ContractError("cluster means not computed");
    }
    NoGradGuard no_grad;
    Tensor f = model.invariant_embedding(x);
    const int64_t batch = f.extent(0);
    const int64_t d_r = f.extent(1);
    const int64_t k = means.classes();
    std::vector<double> logits(static_cast<size_t>(batch * k));
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t y = 0; y < k; ++y) {
            double d2 = 0.0;
            for (int64_t d = 0; d < d_r; ++d) {
                const double diff = f.values()[static_cast<size_t>(b * d_r + d)] -
                                    means.mean_per_class[static_cast<size_t>(y)]
                                                        [static_cast<size_t>(d)];
                d2 += diff * diff;
            }
            logits[static_cast<size_t>(b * k + y)] = -d2;
        }
    }
    return softmax_rows(Tensor::from_values(Shape{batch, k}, std::move(logits)));
}

ClassificationReport classify_report_distance(const EquiVae& model, const Dataset& dataset,
                                              const std::vector<int64_t>& ids,
                                              const ClusterMeans& means) {
    if (ids.empty()) {
        throw ContractError("nothing to classify");
    }
    std::vector<int> truth;
    std::vector<int> predicted;
    for (size_t at = 0; at < ids.size(); at += kChunk) {
        const size_t end = std::min(ids.size(), at + kChunk);
        std::vector<int64_t> chunk(ids.begin() + static_cast<int64_t>(at),
                                   ids.begin() + static_cast<int64_t>(end));
        Tensor probs = distance_classify(model, stack_images(dataset, chunk), means);
        for (size_t i = 0; i < chunk.size(); ++i) {
            truth.push_back(dataset.by_id(chunk[i]).label);
            predicted.push_back(argmax_row(probs, static_cast<int64_t>(i)));
        }
    }
    return report_from_predictions(truth, predicted, dataset.classes);
}

namespace {

ClassificationReport train_head_on_features(
    const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
    const std::vector<std::vector<double>>& test_x, const std::vector<int>& test_y,
    int64_t in_dim, int classes, const HeadConfig& config) {
    Rng rng(config.seed);
    Rng init_rng = rng.sub_stream("init");
    Rng train_rng = rng.sub_stream("train");

    HeadNet net;
    net.dropout_rate = config.dropout;
    net.h0 = DenseLayer::create(net.store, "head/h0", in_dim, config.widths[0], init_rng);
    net.h1 = DenseLayer::create(net.store, "head/h1", config.widths[0], config.widths[1],
                                init_rng);
    net.out = DenseLayer::create(net.store, "head/out", config.widths[1], classes, init_rng);
    Adam adam(AdamConfig{config.lr, 0.9, 0.999, 1e-8}, net.store.names());

    auto make_batch = [&](const std::vector<size_t>& rows) {
        std::vector<double> buf;
        buf.reserve(rows.size() * static_cast<size_t>(in_dim));
        std::vector<int> labels;
        for (size_t r : rows) {
            buf.insert(buf.end(), train_x[r].begin(), train_x[r].end());
            labels.push_back(train_y[r]);
        }
        return std::make_pair(
            Tensor::from_values(Shape{static_cast<int64_t>(rows.size()), in_dim},
                                std::move(buf)),
            labels);
    };

    std::vector<size_t> order(train_x.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        train_rng.shuffle(order);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(config.batch)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(config.batch));
            std::vector<size_t> rows(order.begin() + static_cast<int64_t>(at),
                                     order.begin() + static_cast<int64_t>(end));
            auto [x, labels] = make_batch(rows);
            Tensor probs = net.forward(x, true, &train_rng);
            Tensor loss = cross_entropy_sum(probs, labels);
            backward(loss);
            adam.step(net.store);
            clear_all_grads(net.store);
        }
    }

    std::vector<int> predicted;
    {
        NoGradGuard no_grad;
        for (size_t at = 0; at < test_x.size(); at += kChunk) {
            const size_t end = std::min(test_x.size(), at + kChunk);
            std::vector<double> buf;
            for (size_t i = at; i < end; ++i) {
                buf.insert(buf.end(), test_x[i].begin(), test_x[i].end());
            }
            Tensor x = Tensor::from_values(Shape{static_cast<int64_t>(end - at), in_dim},
                                           std::move(buf));
            Tensor probs = net.forward(x, false, nullptr);
            for (size_t i = 0; i < end - at; ++i) {
                predicted.push_back(argmax_row(probs, static_cast<int64_t>(i)));
            }
        }
    }
    return report_from_predictions(test_y, predicted, classes);
}

}  // namespace

ClassificationReport train_embedding_head(const EquiVae& model, const Dataset& dataset,
                                          const std::vector<int64_t>& train_ids,
                                          const std::vector<int64_t>& test_ids,
                                          const HeadConfig& config) {
    auto train_x = embed_ids(model, dataset, train_ids);
    auto test_x = embed_ids(model, dataset, test_ids);
    std::vector<int> train_y, test_y;
    for (int64_t id : train_ids) train_y.push_back(dataset.by_id(id).label);
    for (int64_t id : test_ids) test_y.push_back(dataset.by_id(id).label);
    return train_head_on_features(train_x, train_y, test_x, test_y, model.config().d_r,
                                  dataset.classes, config);
}

ClassificationReport train_benchmark_classifier(const ModelConfig& arch, const Dataset& dataset,
                                                const std::vector<int64_t>& train_ids,
                                                const std::vector<int64_t>& test_ids,
                                                const HeadConfig& config) {
    Rng rng(config.seed);
    Rng init_rng = rng.sub_stream("init");
    Rng train_rng = rng.sub_stream("train");

    ParameterStore store;
    ImageEncoder enc =
        ImageEncoder::create(store, "clf", arch.backbone_spec(), arch.head_widths[0], init_rng);
    DenseLayer h1 =
        DenseLayer::create(store, "clf/h1", arch.head_widths[0], arch.head_widths[1], init_rng);
    DenseLayer out = DenseLayer::create(store, "clf/out", arch.head_widths[1],
                                        static_cast<int64_t>(dataset.classes), init_rng);
    Adam adam(AdamConfig{config.lr, 0.9, 0.999, 1e-8}, store.names());

    auto forward = [&](const Tensor& x, bool training, Rng* drop_rng) {
        Tensor h = enc.forward(x);
        if (training && drop_rng) h = dropout(h, config.dropout, true, *drop_rng);
        h = relu(h1.forward(h));
        if (training && drop_rng) h = dropout(h, config.dropout, true, *drop_rng);
        return softmax_rows(out.forward(h));
    };

    std::vector<int64_t> order = train_ids;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        train_rng.shuffle(order);
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(config.batch)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(config.batch));
            std::vector<int64_t> chunk(order.begin() + static_cast<int64_t>(at),
                                       order.begin() + static_cast<int64_t>(end));
            std::vector<int> labels;
            for (int64_t id : chunk) labels.push_back(dataset.by_id(id).label);
            Tensor probs = forward(stack_images(dataset, chunk), true, &train_rng);
            Tensor loss = cross_entropy_sum(probs, labels);
            backward(loss);
            adam.step(store);
            clear_all_grads(store);
        }
    }

    std::vector<int> truth, predicted;
    {
        NoGradGuard no_grad;
        for (size_t at = 0; at < test_ids.size(); at += kChunk) {
            const size_t end = std::min(test_ids.size(), at + kChunk);
            std::vector<int64_t> chunk(test_ids.begin() + static_cast<int64_t>(at),
                                       test_ids.begin() + static_cast<int64_t>(end));
            Tensor probs = forward(stack_images(dataset, chunk), false, nullptr);
            for (size_t i = 0; i < chunk.size(); ++i) {
                truth.push_back(dataset.by_id(chunk[i]).label);
                predicted.push_back(argmax_row(probs, static_cast<int64_t>(i)));
            }
        }
    }
    return report_from_predictions(truth, predicted, dataset.classes);
}

namespace {

std::vector<double> decode_single(const EquiVae& model, const std::vector<double>& mean,
                                  const Tensor& v) {
    Tensor out = model.decode(row_tensor(mean), v);
    return out.values();
}

}  // namespace

ImageGrid generate_prior_samples(const EquiVae& model, const ClusterMeans& means,
                                 int64_t per_class, Rng& rng) {
    NoGradGuard no_grad;
    const auto& cfg = model.config();
    ImageGrid grid = ImageGrid::create(per_class, means.classes(), cfg.height, cfg.width,
                                       cfg.channels);
    for (int y = 0; y < means.classes(); ++y) {
        for (int64_t i = 0; i < per_class; ++i) {
            std::vector<double> eps(static_cast<size_t>(cfg.d_v));
            for (double& e : eps) e = rng.normal();
            Tensor v = Tensor::from_values(Shape{1, cfg.d_v}, std::move(eps));
            grid.set_tile(i, y,
                          decode_single(model, means.mean_per_class[static_cast<size_t>(y)], v));
        }
    }
    return grid;
}

ImageGrid interpolate(const EquiVae& model, const ClusterMeans& means, const Dataset& dataset,
                      int64_t id_a, int64_t id_b, int64_t steps) {
    if (steps < 1) {
        throw ContractError("interpolate: steps must be >= 1");
    }
    const auto& a = dataset.by_id(id_a);
    const auto& b = dataset.by_id(id_b);
    if (a.label != b.label) {
        throw ContractError("interpolate: examples are from different classes");
    }
    NoGradGuard no_grad;
    const auto& cfg = model.config();
    const auto& mean = means.mean_per_class[static_cast<size_t>(a.label)];
    Tensor r = row_tensor(mean);
    Tensor mu_a = model.encode_equivariant(r, stack_images(dataset, {id_a})).mu;
    Tensor mu_b = model.encode_equivariant(r, stack_images(dataset, {id_b})).mu;

    ImageGrid grid = ImageGrid::create(1, steps, cfg.height, cfg.width, cfg.channels);
    for (int64_t i = 0; i < steps; ++i) {
        const double t =
            steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        std::vector<double> point(static_cast<size_t>(cfg.d_v));
        for (int64_t d = 0; d < cfg.d_v; ++d) {
            point[static_cast<size_t>(d)] =
                (1.0 - t) * mu_a.values()[static_cast<size_t>(d)] +
                t * mu_b.values()[static_cast<size_t>(d)];
        }
        grid.set_tile(0, i,
                      decode_single(model, mean,
                                    Tensor::from_values(Shape{1, cfg.d_v}, std::move(point))));
    }
    return grid;
}

ImageGrid style_transfer_grid(const EquiVae& model, const ClusterMeans& means,
                              const Dataset& dataset,
                              const std::vector<int64_t>& one_per_class) {
    const int k = means.classes();
    if (static_cast<int>(one_per_class.size()) != k) {
        throw ContractError("style grid needs exactly one example per class");
    }
    for (int j = 0; j < k; ++j) {
        if (dataset.by_id(one_per_class[static_cast<size_t>(j)]).label != j) {
            throw ContractError("style grid: example " + std::to_string(j) +
                                " is not from class " + std::to_string(j));
        }
    }
    NoGradGuard no_grad;
    const auto& cfg = model.config();

    // Styles: posterior mean of each example against its own class mean.
    std::vector<Tensor> styles;
    for (int j = 0; j < k; ++j) {
        Tensor r = row_tensor(means.mean_per_class[static_cast<size_t>(j)]);
        Tensor x = stack_images(dataset, {one_per_class[static_cast<size_t>(j)]});
        styles.push_back(model.encode_equivariant(r, x).mu);
    }

    ImageGrid grid = ImageGrid::create(k, k, cfg.height, cfg.width, cfg.channels);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            grid.set_tile(i, j,
                          decode_single(model, means.mean_per_class[static_cast<size_t>(i)],
                                        styles[static_cast<size_t>(j)]));
        }
    }
    return grid;
}

ImageGrid latent_grid(const EquiVae& model, const ClusterMeans& means, int label, double range,
                      int64_t resolution) {
    const auto& cfg = model.config();
    if (cfg.d_v != 2) {
        throw ContractError("latent grid requires a 2-dimensional equivariant latent");
    }
    if (resolution < 1) {
        throw ContractError("latent grid resolution must be >= 1");
    }
    NoGradGuard no_grad;
    const auto& mean = means.mean_per_class.at(static_cast<size_t>(label));
    ImageGrid grid = ImageGrid::create(resolution, resolution, cfg.height, cfg.width,
                                       cfg.channels);
    for (int64_t i = 0; i < resolution; ++i) {
        for (int64_t j = 0; j < resolution; ++j) {
            double v0 = 0.0;
            double v1 = 0.0;
            if (resolution > 1) {
                const double step = 2.0 * range / static_cast<double>(resolution - 1);
                v0 = -range + static_cast<double>(i) * step;
                v1 = -range + static_cast<double>(j) * step;
            }
            grid.set_tile(
                i, j, decode_single(model, mean, Tensor::from_values(Shape{1, 2}, {v0, v1})));
        }
    }
    return grid;
}

Tensor reconstruct(const EquiVae& model, const ClusterMeans& means, const Dataset& dataset,
                   int64_t id) {
    NoGradGuard no_grad;
    const auto& ex = dataset.by_id(id);
    Tensor r = row_tensor(means.mean_per_class.at(static_cast<size_t>(ex.label)));
    Tensor x = stack_images(dataset, {id});
    Tensor v = model.encode_equivariant(r, x).mu;
    return model.decode(r, v);
}

void export_embeddings(const EquiVae& model, const Dataset& dataset,
                       const std::vector<int64_t>& ids, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    const auto& cfg = model.config();
    out << "id,label";
    for (int64_t d = 0; d < cfg.d_r; ++d) out << ",r" << d;
    for (int64_t d = 0; d < cfg.d_v; ++d) out << ",v" << d;
    out << "\n";
    out << std::setprecision(17);

    NoGradGuard no_grad;
    for (size_t at = 0; at < ids.size(); at += kChunk) {
        const size_t end = std::min(ids.size(), at + kChunk);
        std::vector<int64_t> chunk(ids.begin() + static_cast<int64_t>(at),
                                   ids.begin() + static_cast<int64_t>(end));
        Tensor x = stack_images(dataset, chunk);
        Tensor f = model.invariant_embedding(x);
        Tensor mu = model.encode_equivariant(f, x).mu;
        for (size_t i = 0; i < chunk.size(); ++i) {
            out << chunk[i] << "," << dataset.by_id(chunk[i]).label;
            for (int64_t d = 0; d < cfg.d_r; ++d) {
                out << "," << f.values()[i * static_cast<size_t>(cfg.d_r) +
                                         static_cast<size_t>(d)];
            }
            for (int64_t d = 0; d < cfg.d_v; ++d) {
                out << "," << mu.values()[i * static_cast<size_t>(cfg.d_v) +
                                          static_cast<size_t>(d)];
            }
            out << "\n";
        }
    }
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

}  // namespace equivae
