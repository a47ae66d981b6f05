#include "equivae/model.hpp"

#include <numeric>

namespace equivae {

namespace {

void validate_config(const ModelConfig& c) {
    if (c.d_r < 1 || c.d_v < 1) {
        throw ConfigError("latent dimensions must be positive");
    }
    if (c.classes < 1) {
        throw ConfigError("classes must be positive");
    }
    if (c.head_widths.size() != 2 || c.decoder_widths.size() != 2 ||
        c.classifier_widths.size() != 2) {
        throw ConfigError("head, decoder and classifier widths each take exactly two entries");
    }
}

}  // namespace

EquiVae::EquiVae(ModelConfig config, Rng& init_rng) : config_(std::move(config)) {
    validate_config(config_);
    build(&init_rng);
}

EquiVae::EquiVae(ModelConfig config, ParameterStore store)
    : config_(std::move(config)), store_(std::move(store)) {
    validate_config(config_);
    build(nullptr);
}

void EquiVae::build(Rng* rng) {
    const BackboneSpec bb = config_.backbone_spec();
    const int64_t emb = config_.head_widths[0];
    const int64_t head = config_.head_widths[1];
    const int64_t dw0 = config_.decoder_widths[0];
    const int64_t dw1 = config_.decoder_widths[1];
    const int64_t cw0 = config_.classifier_widths[0];
    const int64_t cw1 = config_.classifier_widths[1];

    // A small helper pair so creation and re-binding share the layout code.
    auto enc = [&](const std::string& prefix) {
        return rng ? ImageEncoder::create(store_, prefix, bb, emb, *rng)
                   : ImageEncoder::from_store(store_, prefix, bb);
    };
    auto dense = [&](const std::string& name, int64_t in, int64_t out) {
        return rng ? DenseLayer::create(store_, name, in, out, *rng)
                   : DenseLayer::from_store(store_, name);
    };

    inv_encoder_ = enc("inv");
    inv_head_ = dense("inv/head", emb, head);
    inv_out_ = dense("inv/out", head, config_.d_r);

    cov_encoder_ = enc("cov");
    cov_r_proj_ = dense("cov/rproj", config_.d_r, config_.r_proj_width);
    const int64_t joint = emb + config_.r_proj_width;
    cov_mu_hidden_ = dense("cov/mu_h", joint, head);
    cov_mu_out_ = dense("cov/mu", head, config_.d_v);
    cov_sigma_hidden_ = dense("cov/sigma_h", joint, head);
    cov_sigma_out_ = dense("cov/sigma", head, config_.d_v);

    dec_r_in_ = dense("dec/r_in", config_.d_r, dw0);
    dec_v_in_ = dense("dec/v_in", config_.d_v, dw0);
    dec_combine_ = dense("dec/combine", 2 * dw0, dw1);
    if (config_.backbone == BackboneKind::Mlp) {
        std::vector<int64_t> mirror(config_.mlp_hidden.rbegin(), config_.mlp_hidden.rend());
        int64_t in = dw1;
        for (size_t i = 0; i < mirror.size(); ++i) {
            dec_mlp_.push_back(dense("dec/l" + std::to_string(i), in, mirror[i]));
            in = mirror[i];
        }
        dec_out_ = dense("dec/out", in, config_.pixels());
    } else {
        const auto& chain = inv_encoder_.backbone.spatial_chain();
        const auto [h5, w5] = chain.back();
        dec_spatial_ = dense("dec/spatial", dw1, kConvFilters[4] * h5 * w5);
        // Mirror of the encoder: four stride-2 transposed convs walking the
        // recorded spatial chain back up, then a stride-1 conv to pixels.
        const int64_t dec_filters[4] = {64, 32, 16, 8};
        int64_t in_ch = kConvFilters[4];
        for (int i = 0; i < 4; ++i) {
            const auto [oh, ow] = chain[chain.size() - 2 - static_cast<size_t>(i)];
            if (rng) {
                dec_tconv_.push_back(ConvTransposeLayer::create(
                    store_, "dec/t" + std::to_string(i), in_ch, dec_filters[i], kConvKernel, 2,
                    oh, ow, *rng));
            } else {
                dec_tconv_.push_back(ConvTransposeLayer::from_store(
                    store_, "dec/t" + std::to_string(i), 2, oh, ow));
            }
            in_ch = dec_filters[i];
        }
        if (rng) {
            dec_final_ = ConvLayer::create(store_, "dec/final", in_ch, config_.channels,
                                           kConvKernel, 1, *rng);
        } else {
            dec_final_ = ConvLayer::from_store(store_, "dec/final", 1);
        }
    }
    if (config_.likelihood == Likelihood::Gaussian) {
        if (rng) {
            store_.insert("dec/log_var", Tensor::zeros(Shape{}, true));
        }
    }

    ypost_encoder_ = enc("ypost");
    ypost_h0_ = dense("ypost/h0", emb + config_.d_r, cw0);
    ypost_h1_ = dense("ypost/h1", cw0, cw1);
    ypost_out_ = dense("ypost/out", cw1, config_.classes);
}

Tensor EquiVae::encode_invariant(const Tensor& images,
                                 const std::vector<int64_t>& segments) const {
    if (segments.empty()) {
        throw ContractError("encode_invariant: no segments");
    }
    int64_t total = 0;
    bool all_single = true;
    for (int64_t m : segments) {
        if (m < 1) {
            throw ContractError("encode_invariant: empty complementary set");
        }
        all_single = all_single && m == 1;
        total += m;
    }
    if (images.ndim() != 4 || images.extent(0) != total) {
        throw ShapeError("encode_invariant: segment sizes sum to " + std::to_string(total) +
                         " but images are " + shape_str(images.shape()));
    }

    Tensor embedded = inv_encoder_.forward(images);  // [N, emb]
    Tensor pooled;
    if (all_single) {
        pooled = embedded;
    } else {
        // Mean pooling as a matmul with a constant averaging matrix, so the
        // backward pass distributes gradients without a dedicated op.
        const int64_t batch = static_cast<int64_t>(segments.size());
        std::vector<double> avg(static_cast<size_t>(batch * total), 0.0);
        int64_t offset = 0;
        for (int64_t i = 0; i < batch; ++i) {
            const double w = 1.0 / static_cast<double>(segments[static_cast<size_t>(i)]);
            for (int64_t j = 0; j < segments[static_cast<size_t>(i)]; ++j) {
                avg[static_cast<size_t>(i * total + offset + j)] = w;
            }
            offset += segments[static_cast<size_t>(i)];
        }
        pooled = matmul(Tensor::from_values(Shape{batch, total}, std::move(avg)), embedded);
    }
    Tensor h = relu(inv_head_.forward(pooled));
    return inv_out_.forward(h);
}

Tensor EquiVae::invariant_embedding(const Tensor& x) const {
    return encode_invariant(x, std::vector<int64_t>(static_cast<size_t>(x.extent(0)), 1));
}

GaussianPosterior EquiVae::encode_equivariant(const Tensor& r, const Tensor& x) const {
    if (r.ndim() != 2 || r.extent(0) != x.extent(0)) {
        throw ShapeError("encode_equivariant: batch mismatch, r " + shape_str(r.shape()) +
                         " vs x " + shape_str(x.shape()));
    }
    Tensor ex = cov_encoder_.forward(x);
    Tensor rp = relu(cov_r_proj_.forward(r));
    Tensor joint = concat_cols(ex, rp);
    Tensor mu = cov_mu_out_.forward(relu(cov_mu_hidden_.forward(joint)));
    Tensor half_log_var = cov_sigma_out_.forward(relu(cov_sigma_hidden_.forward(joint)));
    return GaussianPosterior{mu, exp(half_log_var)};
}

Tensor EquiVae::reparameterize(const GaussianPosterior& posterior, const Tensor& eps) {
    if (eps.shape() != posterior.mu.shape()) {
        throw ShapeError("reparameterize: eps " + shape_str(eps.shape()) + " does not match mu " +
                         shape_str(posterior.mu.shape()));
    }
    return add(posterior.mu, mul(posterior.sigma, eps));
}

Tensor EquiVae::decode(const Tensor& r, const Tensor& v) const {
    if (r.extent(0) != v.extent(0)) {
        throw ShapeError("decode: batch mismatch");
    }
    const int64_t batch = r.extent(0);
    Tensor rin = relu(dec_r_in_.forward(r));
    Tensor vin = relu(dec_v_in_.forward(v));
    Tensor h = relu(dec_combine_.forward(concat_cols(rin, vin)));

    Tensor flat;
    if (config_.backbone == BackboneKind::Mlp) {
        for (const auto& layer : dec_mlp_) {
            h = relu(layer.forward(h));
        }
        flat = dec_out_.forward(h);
        if (config_.likelihood == Likelihood::Bernoulli) {
            flat = sigmoid(flat);
        }
        return reshape(flat, Shape{batch, config_.channels, config_.height, config_.width});
    }

    const auto& chain = inv_encoder_.backbone.spatial_chain();
    const auto [h5, w5] = chain.back();
    Tensor s = relu(dec_spatial_.forward(h));
    Tensor map = reshape(s, Shape{batch, kConvFilters[4], h5, w5});
    for (const auto& layer : dec_tconv_) {
        map = relu(layer.forward(map));
    }
    map = dec_final_->forward(map);
    if (config_.likelihood == Likelihood::Bernoulli) {
        map = sigmoid(map);
    }
    return map;
}

Tensor EquiVae::label_posterior(const Tensor& x, bool training, Rng* dropout_rng) const {
    Tensor ex = ypost_encoder_.forward(x);
    Tensor frozen;
    {
        // The invariant embedding is fed through as data only; it learns
        // from complementary samples, never from the label head.
        NoGradGuard no_grad;
        frozen = stop_gradient(invariant_embedding(x));
    }
    Tensor h = concat_cols(ex, frozen);
    h = relu(ypost_h0_.forward(h));
    if (training && dropout_rng) {
        h = dropout(h, config_.dropout_rate, true, *dropout_rng);
    }
    h = relu(ypost_h1_.forward(h));
    if (training && dropout_rng) {
        h = dropout(h, config_.dropout_rate, true, *dropout_rng);
    }
    return softmax_rows(ypost_out_.forward(h));
}

Tensor EquiVae::gaussian_log_var() const {
    return store_.get("dec/log_var");
}

const std::vector<std::string>& EquiVae::all_groups() {
    static const std::vector<std::string> groups{"inv", "cov", "dec", "ypost"};
    return groups;
}

std::vector<std::string> EquiVae::parameter_names(const std::vector<std::string>& groups) const {
    std::vector<std::string> out;
    for (const auto& group : groups) {
        auto names = store_.names_with_prefix(group + "/");
        out.insert(out.end(), names.begin(), names.end());
    }
    return out;
}

}  // namespace equivae
