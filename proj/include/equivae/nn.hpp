#pragma once

#include <map>
#include <string>
#include <vector>

#include "equivae/ops.hpp"
#include "equivae/rng.hpp"

namespace equivae {

/// Named map of trainable tensors. Names are unique and iteration is in
/// sorted name order; the optimizer and the checkpoint writer both rely on
/// that ordering being stable.
class ParameterStore {
public:
    void insert(const std::string& name, Tensor tensor);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    size_t count() const { return params_.size(); }
    int64_t total_parameters() const;

    const std::map<std::string, Tensor>& entries() const { return params_; }

private:
    std::map<std::string, Tensor> params_;
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases are zeros.
Tensor glorot_uniform(const Shape& shape, int64_t fan_in, int64_t fan_out, Rng& rng);

struct DenseLayer {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static DenseLayer create(ParameterStore& store, const std::string& name, int64_t in,
                             int64_t out, Rng& rng);
    static DenseLayer from_store(ParameterStore& store, const std::string& name);

    Tensor forward(const Tensor& x) const;  // [B, in] -> [B, out], no activation
    int64_t in_dim() const { return weight.extent(0); }
    int64_t out_dim() const { return weight.extent(1); }
};

struct ConvLayer {
    Tensor kernel;  // [F, C, kh, kw]
    Tensor bias;    // [F]
    int stride = 1;

    static ConvLayer create(ParameterStore& store, const std::string& name, int64_t in_ch,
                            int64_t out_ch, int64_t ksize, int stride, Rng& rng);
    static ConvLayer from_store(ParameterStore& store, const std::string& name, int stride);

    Tensor forward(const Tensor& x) const;
};

/// Transposed convolution layer; bias spans the output channels.
struct ConvTransposeLayer {
    Tensor kernel;  // [F, C, kh, kw]
    Tensor bias;    // [C]
    int stride = 1;
    int64_t out_h = -1;
    int64_t out_w = -1;

    static ConvTransposeLayer create(ParameterStore& store, const std::string& name,
                                     int64_t in_ch, int64_t out_ch, int64_t ksize, int stride,
                                     int64_t out_h, int64_t out_w, Rng& rng);
    static ConvTransposeLayer from_store(ParameterStore& store, const std::string& name,
                                         int stride, int64_t out_h, int64_t out_w);

    Tensor forward(const Tensor& x) const;
};

/// Inverted dropout: in training mode each unit is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); in inference mode this is
/// the exact identity.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

enum class BackboneKind { Mlp, Conv };

struct BackboneSpec {
    BackboneKind kind = BackboneKind::Mlp;
    int64_t channels = 1;
    int64_t height = 28;
    int64_t width = 28;
    std::vector<int64_t> mlp_hidden{256, 128};
};

// The conv feature extractor is fixed by construction: five 5x5 layers with
// (8,16,32,64,64) filters and strides (1,2,2,2,2).
inline constexpr int64_t kConvFilters[5] = {8, 16, 32, 64, 64};
inline constexpr int kConvStrides[5] = {1, 2, 2, 2, 2};
inline constexpr int64_t kConvKernel = 5;

/// Image feature extractor shared by every encoder-side network. ReLU after
/// every layer; conv output is flattened to [B, F * h * w].
class Backbone {
public:
    static Backbone create(ParameterStore& store, const std::string& prefix,
                           const BackboneSpec& spec, Rng& rng);
    static Backbone from_store(ParameterStore& store, const std::string& prefix,
                               const BackboneSpec& spec);

    Tensor embed(const Tensor& x) const;  // [B,C,H,W] -> [B, out_dim()]
    int64_t out_dim() const { return out_dim_; }
    /// Spatial (h, w) ahead of each conv layer plus the final map; the
    /// decoder mirrors this chain. Empty for the MLP backbone.
    const std::vector<std::pair<int64_t, int64_t>>& spatial_chain() const { return spatial_; }
    const BackboneSpec& spec() const { return spec_; }

private:
    BackboneSpec spec_;
    std::vector<DenseLayer> dense_;
    std::vector<ConvLayer> conv_;
    std::vector<std::pair<int64_t, int64_t>> spatial_;
    int64_t out_dim_ = 0;

    void compute_geometry();
};

/// Backbone followed by one dense embedding layer (ReLU), the common
/// encoder-side block.
struct ImageEncoder {
    Backbone backbone;
    DenseLayer embed;

    static ImageEncoder create(ParameterStore& store, const std::string& prefix,
                               const BackboneSpec& spec, int64_t embed_dim, Rng& rng);
    static ImageEncoder from_store(ParameterStore& store, const std::string& prefix,
                                   const BackboneSpec& spec);

    Tensor forward(const Tensor& x) const;
    int64_t out_dim() const { return embed.out_dim(); }
};

}  // namespace equivae
