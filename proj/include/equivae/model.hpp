#pragma once

#include <optional>
#include <string>
#include <vector>

#include "equivae/nn.hpp"

namespace equivae {

enum class Likelihood { Bernoulli, Gaussian };

struct ModelConfig {
    BackboneKind backbone = BackboneKind::Mlp;
    std::vector<int64_t> mlp_hidden{256, 128};
    int64_t channels = 1;
    int64_t height = 28;
    int64_t width = 28;
    int64_t classes = 10;
    int64_t d_r = 16;
    int64_t d_v = 16;
    // Invariant-encoder dense widths: embedding layer ahead of the mean,
    // hidden layer after it.
    std::vector<int64_t> head_widths{128, 64};
    // Decoder dense widths: per-latent input layers, then the combine layer.
    std::vector<int64_t> decoder_widths{64, 128};
    // Label-posterior dropout head.
    std::vector<int64_t> classifier_widths{128, 64};
    int64_t r_proj_width = 64;
    Likelihood likelihood = Likelihood::Bernoulli;
    double dropout_rate = 0.5;

    BackboneSpec backbone_spec() const {
        return BackboneSpec{backbone, channels, height, width, mlp_hidden};
    }
    int64_t pixels() const { return channels * height * width; }
};

/// Diagonal Gaussian q(v | r, x): per-example mean and standard deviation.
struct GaussianPosterior {
    Tensor mu;     // [B, D_v]
    Tensor sigma;  // [B, D_v], positive
};

/// The two-latent generative model: a deterministic class-level latent r
/// computed from complementary same-class samples, and a stochastic
/// style latent v with a unit-normal prior.
class EquiVae {
public:
    EquiVae(ModelConfig config, Rng& init_rng);
    /// Rebind onto an existing store (checkpoint load).
    EquiVae(ModelConfig config, ParameterStore store);

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

    /// r from a flat batch of complementary images: segments[i] consecutive
    /// images belong to example i and are mean-pooled after the embedding
    /// layer. Output is [len(segments), D_r] and is order-independent
    /// within each segment.
    Tensor encode_invariant(const Tensor& images, const std::vector<int64_t>& segments) const;

    /// Single-sample path f(x), identical to encode_invariant with
    /// one-image segments; used at inference on unlabelled data.
    Tensor invariant_embedding(const Tensor& x) const;

    GaussianPosterior encode_equivariant(const Tensor& r, const Tensor& x) const;

    /// v = mu + sigma * eps.
    static Tensor reparameterize(const GaussianPosterior& posterior, const Tensor& eps);

    /// Likelihood parameters: Bernoulli means in (0,1) or Gaussian means.
    Tensor decode(const Tensor& r, const Tensor& v) const;

    /// q(y|x): softmax over K logits from the label-posterior head. The
    /// invariant embedding is fed through a stop-gradient, so no gradient
    /// from this head ever reaches the invariant encoder.
    Tensor label_posterior(const Tensor& x, bool training, Rng* dropout_rng) const;

    /// Global log-variance of the Gaussian decoder (Gaussian mode only).
    Tensor gaussian_log_var() const;

    static const std::vector<std::string>& all_groups();
    std::vector<std::string> parameter_names(const std::vector<std::string>& groups) const;

private:
    void build(Rng* rng);

    ModelConfig config_;
    ParameterStore store_;

    ImageEncoder inv_encoder_;
    DenseLayer inv_head_;
    DenseLayer inv_out_;

    ImageEncoder cov_encoder_;
    DenseLayer cov_r_proj_;
    DenseLayer cov_mu_hidden_;
    DenseLayer cov_mu_out_;
    DenseLayer cov_sigma_hidden_;
    DenseLayer cov_sigma_out_;

    DenseLayer dec_r_in_;
    DenseLayer dec_v_in_;
    DenseLayer dec_combine_;
    std::vector<DenseLayer> dec_mlp_;
    DenseLayer dec_out_;                        // MLP path
    DenseLayer dec_spatial_;                    // conv path
    std::vector<ConvTransposeLayer> dec_tconv_;  // conv path
    std::optional<ConvLayer> dec_final_;         // conv path, stride 1

    ImageEncoder ypost_encoder_;
    DenseLayer ypost_h0_;
    DenseLayer ypost_h1_;
    DenseLayer ypost_out_;
};

}  // namespace equivae
