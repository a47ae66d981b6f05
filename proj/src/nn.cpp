#include "equivae/nn.hpp"

#include <cmath>

namespace equivae {

void ParameterStore::insert(const std::string& name, Tensor tensor) {
    auto [it, inserted] = params_.emplace(name, std::move(tensor));
    if (!inserted) {
        throw ContractError("parameter '" + name + "' registered twice");
    }
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ContractError("unknown parameter '" + name + "'");
    }
    return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ContractError("unknown parameter '" + name + "'");
    }
    return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
    return params_.find(name) != params_.end();
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) {
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : params_) {
        if (name.rfind(prefix, 0) == 0) {
            out.push_back(name);
        }
    }
    return out;
}

int64_t ParameterStore::total_parameters() const {
    int64_t n = 0;
    for (const auto& [_, t] : params_) {
        n += t.size();
    }
    return n;
}

Tensor glorot_uniform(const Shape& shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> values(static_cast<size_t>(shape_size(shape)));
    for (double& v : values) {
        v = rng.uniform(-limit, limit);
    }
    return Tensor::from_values(shape, std::move(values), true);
}

DenseLayer DenseLayer::create(ParameterStore& store, const std::string& name, int64_t in,
                              int64_t out, Rng& rng) {
    DenseLayer layer;
    layer.weight = glorot_uniform(Shape{in, out}, in, out, rng);
    layer.bias = Tensor::zeros(Shape{out}, true);
    store.insert(name + "/W", layer.weight);
    store.insert(name + "/b", layer.bias);
    return layer;
}

DenseLayer DenseLayer::from_store(ParameterStore& store, const std::string& name) {
    return DenseLayer{store.get(name + "/W"), store.get(name + "/b")};
}

Tensor DenseLayer::forward(const Tensor& x) const {
    if (x.ndim() != 2 || x.extent(1) != weight.extent(0)) {
        throw ShapeError("dense: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    return add(matmul(x, weight), bias);
}

ConvLayer ConvLayer::create(ParameterStore& store, const std::string& name, int64_t in_ch,
                            int64_t out_ch, int64_t ksize, int stride, Rng& rng) {
    ConvLayer layer;
    layer.kernel = glorot_uniform(Shape{out_ch, in_ch, ksize, ksize}, in_ch * ksize * ksize,
                                  out_ch * ksize * ksize, rng);
    layer.bias = Tensor::zeros(Shape{out_ch}, true);
    layer.stride = stride;
    store.insert(name + "/K", layer.kernel);
    store.insert(name + "/b", layer.bias);
    return layer;
}

ConvLayer ConvLayer::from_store(ParameterStore& store, const std::string& name, int stride) {
    return ConvLayer{store.get(name + "/K"), store.get(name + "/b"), stride};
}

Tensor ConvLayer::forward(const Tensor& x) const {
    return conv2d(x, kernel, bias, stride);
}

ConvTransposeLayer ConvTransposeLayer::create(ParameterStore& store, const std::string& name,
                                              int64_t in_ch, int64_t out_ch, int64_t ksize,
                                              int stride, int64_t out_h, int64_t out_w,
                                              Rng& rng) {
    ConvTransposeLayer layer;
    layer.kernel = glorot_uniform(Shape{in_ch, out_ch, ksize, ksize}, in_ch * ksize * ksize,
                                  out_ch * ksize * ksize, rng);
    layer.bias = Tensor::zeros(Shape{out_ch}, true);
    layer.stride = stride;
    layer.out_h = out_h;
    layer.out_w = out_w;
    store.insert(name + "/K", layer.kernel);
    store.insert(name + "/b", layer.bias);
    return layer;
}

ConvTransposeLayer ConvTransposeLayer::from_store(ParameterStore& store, const std::string& name,
                                                  int stride, int64_t out_h, int64_t out_w) {
    return ConvTransposeLayer{store.get(name + "/K"), store.get(name + "/b"), stride, out_h,
                              out_w};
}

Tensor ConvTransposeLayer::forward(const Tensor& x) const {
    return conv2d_transpose(x, kernel, bias, stride, out_h, out_w);
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw DomainError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(static_cast<size_t>(x.size()));
    for (double& m : mask) {
        m = rng.uniform() >= rate ? scale : 0.0;
    }
    return mul(x, Tensor::from_values(x.shape(), std::move(mask)));
}

Backbone Backbone::create(ParameterStore& store, const std::string& prefix,
                          const BackboneSpec& spec, Rng& rng) {
    Backbone b;
    b.spec_ = spec;
    b.compute_geometry();
    if (spec.kind == BackboneKind::Mlp) {
        int64_t in = spec.channels * spec.height * spec.width;
        for (size_t i = 0; i < spec.mlp_hidden.size(); ++i) {
            b.dense_.push_back(DenseLayer::create(store, prefix + "/l" + std::to_string(i), in,
                                                  spec.mlp_hidden[i], rng));
            in = spec.mlp_hidden[i];
        }
    } else {
        int64_t in_ch = spec.channels;
        for (int i = 0; i < 5; ++i) {
            b.conv_.push_back(ConvLayer::create(store, prefix + "/c" + std::to_string(i), in_ch,
                                                kConvFilters[i], kConvKernel, kConvStrides[i],
                                                rng));
            in_ch = kConvFilters[i];
        }
    }
    return b;
}

Backbone Backbone::from_store(ParameterStore& store, const std::string& prefix,
                              const BackboneSpec& spec) {
    Backbone b;
    b.spec_ = spec;
    b.compute_geometry();
    if (spec.kind == BackboneKind::Mlp) {
        for (size_t i = 0; i < spec.mlp_hidden.size(); ++i) {
            b.dense_.push_back(DenseLayer::from_store(store, prefix + "/l" + std::to_string(i)));
        }
    } else {
        for (int i = 0; i < 5; ++i) {
            b.conv_.push_back(
                ConvLayer::from_store(store, prefix + "/c" + std::to_string(i), kConvStrides[i]));
        }
    }
    return b;
}

void Backbone::compute_geometry() {
    if (spec_.kind == BackboneKind::Mlp) {
        if (spec_.mlp_hidden.empty()) {
            throw ConfigError("mlp backbone needs at least one hidden layer");
        }
        out_dim_ = spec_.mlp_hidden.back();
        return;
    }
    int64_t h = spec_.height;
    int64_t w = spec_.width;
    for (int i = 0; i < 5; ++i) {
        spatial_.emplace_back(h, w);
        h = (h + kConvStrides[i] - 1) / kConvStrides[i];
        w = (w + kConvStrides[i] - 1) / kConvStrides[i];
    }
    spatial_.emplace_back(h, w);
    out_dim_ = kConvFilters[4] * h * w;
}

Tensor Backbone::embed(const Tensor& x) const {
    if (x.ndim() != 4 || x.extent(1) != spec_.channels || x.extent(2) != spec_.height ||
        x.extent(3) != spec_.width) {
        throw ShapeError("backbone: expected [B," + std::to_string(spec_.channels) + "," +
                         std::to_string(spec_.height) + "," + std::to_string(spec_.width) +
                         "], got " + shape_str(x.shape()));
    }
    const int64_t batch = x.extent(0);
    if (spec_.kind == BackboneKind::Mlp) {
        Tensor h = reshape(x, Shape{batch, spec_.channels * spec_.height * spec_.width});
        for (const auto& layer : dense_) {
            h = relu(layer.forward(h));
        }
        return h;
    }
    Tensor h = x;
    for (const auto& layer : conv_) {
        h = relu(layer.forward(h));
    }
    return reshape(h, Shape{batch, out_dim_});
}

ImageEncoder ImageEncoder::create(ParameterStore& store, const std::string& prefix,
                                  const BackboneSpec& spec, int64_t embed_dim, Rng& rng) {
    ImageEncoder enc;
    enc.backbone = Backbone::create(store, prefix + "/bb", spec, rng);
    enc.embed = DenseLayer::create(store, prefix + "/embed", enc.backbone.out_dim(), embed_dim,
                                   rng);
    return enc;
}

ImageEncoder ImageEncoder::from_store(ParameterStore& store, const std::string& prefix,
                                      const BackboneSpec& spec) {
    ImageEncoder enc;
    enc.backbone = Backbone::from_store(store, prefix + "/bb", spec);
    enc.embed = DenseLayer::from_store(store, prefix + "/embed");
    return enc;
}

Tensor ImageEncoder::forward(const Tensor& x) const {
    return relu(embed.forward(backbone.embed(x)));
}

}  // namespace equivae
