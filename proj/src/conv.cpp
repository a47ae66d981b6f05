#include <cmath>
#include <memory>

#include "equivae/ops.hpp"

namespace equivae {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// Geometry of one conv2d application: maps [B,C,H,W] to [B,F,Ho,Wo] with
// Ho = ceil(H/stride) and zero padding split evenly (extra on the high side).
struct ConvGeom {
    int64_t batch, in_ch, h, w;
    int64_t out_ch, kh, kw;
    int64_t stride;
    int64_t pad_t, pad_l;
    int64_t ho, wo;
};

ConvGeom make_geom(int64_t batch, int64_t in_ch, int64_t h, int64_t w, int64_t out_ch, int64_t kh,
                   int64_t kw, int64_t stride) {
    ConvGeom g;
    g.batch = batch;
    g.in_ch = in_ch;
    g.h = h;
    g.w = w;
    g.out_ch = out_ch;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.ho = (h + stride - 1) / stride;
    g.wo = (w + stride - 1) / stride;
    const int64_t pad_h = std::max<int64_t>((g.ho - 1) * stride + kh - h, 0);
    const int64_t pad_w = std::max<int64_t>((g.wo - 1) * stride + kw - w, 0);
    g.pad_t = pad_h / 2;
    g.pad_l = pad_w / 2;
    return g;
}

void conv_fwd(const double* in, const double* kernel, const double* bias, double* out,
              const ConvGeom& g) {
    for (int64_t b = 0; b < g.batch; ++b) {
        for (int64_t f = 0; f < g.out_ch; ++f) {
            for (int64_t oy = 0; oy < g.ho; ++oy) {
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                    double acc = bias ? bias[f] : 0.0;
                    for (int64_t c = 0; c < g.in_ch; ++c) {
                        const double* plane = in + (b * g.in_ch + c) * g.h * g.w;
                        const double* kslice = kernel + (f * g.in_ch + c) * g.kh * g.kw;
                        for (int64_t u = 0; u < g.kh; ++u) {
                            const int64_t y = oy * g.stride + u - g.pad_t;
                            if (y < 0 || y >= g.h) continue;
                            for (int64_t v = 0; v < g.kw; ++v) {
                                const int64_t x = ox * g.stride + v - g.pad_l;
                                if (x < 0 || x >= g.w) continue;
                                acc += plane[y * g.w + x] * kslice[u * g.kw + v];
                            }
                        }
                    }
                    // Accumulating lets the same kernel serve as a gradient pass.
                    out[((b * g.out_ch + f) * g.ho + oy) * g.wo + ox] += acc;
                }
            }
        }
    }
}

void conv_bwd_in(const double* dout, const double* kernel, double* din, const ConvGeom& g) {
    for (int64_t b = 0; b < g.batch; ++b) {
        for (int64_t f = 0; f < g.out_ch; ++f) {
            for (int64_t oy = 0; oy < g.ho; ++oy) {
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                    const double gval = dout[((b * g.out_ch + f) * g.ho + oy) * g.wo + ox];
                    if (gval == 0.0) continue;
                    for (int64_t c = 0; c < g.in_ch; ++c) {
                        double* plane = din + (b * g.in_ch + c) * g.h * g.w;
                        const double* kslice = kernel + (f * g.in_ch + c) * g.kh * g.kw;
                        for (int64_t u = 0; u < g.kh; ++u) {
                            const int64_t y = oy * g.stride + u - g.pad_t;
                            if (y < 0 || y >= g.h) continue;
                            for (int64_t v = 0; v < g.kw; ++v) {
                                const int64_t x = ox * g.stride + v - g.pad_l;
                                if (x < 0 || x >= g.w) continue;
                                plane[y * g.w + x] += gval * kslice[u * g.kw + v];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_bwd_kernel(const double* in, const double* dout, double* dkernel, const ConvGeom& g) {
    for (int64_t b = 0; b < g.batch; ++b) {
        for (int64_t f = 0; f < g.out_ch; ++f) {
            for (int64_t oy = 0; oy < g.ho; ++oy) {
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                    const double gval = dout[((b * g.out_ch + f) * g.ho + oy) * g.wo + ox];
                    if (gval == 0.0) continue;
                    for (int64_t c = 0; c < g.in_ch; ++c) {
                        const double* plane = in + (b * g.in_ch + c) * g.h * g.w;
                        double* kslice = dkernel + (f * g.in_ch + c) * g.kh * g.kw;
                        for (int64_t u = 0; u < g.kh; ++u) {
                            const int64_t y = oy * g.stride + u - g.pad_t;
                            if (y < 0 || y >= g.h) continue;
                            for (int64_t v = 0; v < g.kw; ++v) {
                                const int64_t x = ox * g.stride + v - g.pad_l;
                                if (x < 0 || x >= g.w) continue;
                                kslice[u * g.kw + v] += gval * plane[y * g.w + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

void check_stride(int stride) {
    if (stride != 1 && stride != 2) {
        throw ContractError("conv stride must be 1 or 2, got " + std::to_string(stride));
    }
}

Tensor finish_conv(Shape shape, std::vector<double> values, bool rg, const char* name) {
    auto node = detail::alloc_node(std::move(shape), std::move(values), rg);
    if (debug_checks()) {
        detail::check_finite(node->values, name);
    }
    return Tensor::wrap(node);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride) {
    check_stride(stride);
    if (input.ndim() != 4 || kernel.ndim() != 4) {
        throw ShapeError("conv2d: expected rank-4 input and kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
    }
    if (input.extent(1) != kernel.extent(1)) {
        throw ShapeError("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
    }
    if (bias.ndim() != 1 || bias.extent(0) != kernel.extent(0)) {
        throw ShapeError("conv2d: bias must be [filters], got " + shape_str(bias.shape()));
    }
    const ConvGeom g = make_geom(input.extent(0), input.extent(1), input.extent(2),
                                 input.extent(3), kernel.extent(0), kernel.extent(2),
                                 kernel.extent(3), stride);

    std::vector<double> out(static_cast<size_t>(g.batch * g.out_ch * g.ho * g.wo));
    conv_fwd(input.values().data(), kernel.values().data(), bias.values().data(), out.data(), g);

    const bool rg = grad_enabled() &&
                    (input.requires_grad() || kernel.requires_grad() || bias.requires_grad());
    Tensor result =
        finish_conv(Shape{g.batch, g.out_ch, g.ho, g.wo}, std::move(out), rg, "conv2d");
    if (rg) {
        NodePtr nin = input.node();
        NodePtr nk = kernel.node();
        NodePtr nb = bias.node();
        active_tape().record(result.node(), [nin, nk, nb, g](const std::vector<double>& gr) {
            if (nin->requires_grad) {
                conv_bwd_in(gr.data(), nk->values.data(), nin->grad_buffer().data(), g);
            }
            if (nk->requires_grad) {
                conv_bwd_kernel(nin->values.data(), gr.data(), nk->grad_buffer().data(), g);
            }
            if (nb->requires_grad) {
                auto& db = nb->grad_buffer();
                for (int64_t b = 0; b < g.batch; ++b) {
                    for (int64_t f = 0; f < g.out_ch; ++f) {
                        double acc = 0.0;
                        const double* slice = gr.data() + (b * g.out_ch + f) * g.ho * g.wo;
                        for (int64_t i = 0; i < g.ho * g.wo; ++i) {
                            acc += slice[i];
                        }
                        db[static_cast<size_t>(f)] += acc;
                    }
                }
            }
        });
    }
    return result;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                        int64_t out_h, int64_t out_w) {
    check_stride(stride);
    if (input.ndim() != 4 || kernel.ndim() != 4) {
        throw ShapeError("conv2d_transpose: expected rank-4 input and kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
    }
    if (input.extent(1) != kernel.extent(0)) {
        throw ShapeError("conv2d_transpose: channel mismatch, input " +
                         shape_str(input.shape()) + " vs kernel " + shape_str(kernel.shape()));
    }
    if (bias.ndim() != 1 || bias.extent(0) != kernel.extent(1)) {
        throw ShapeError("conv2d_transpose: bias must be [channels], got " +
                         shape_str(bias.shape()));
    }
    const int64_t hi = input.extent(2);
    const int64_t wi = input.extent(3);
    if (out_h < 0) out_h = stride * hi;
    if (out_w < 0) out_w = stride * wi;
    if ((out_h + stride - 1) / stride != hi || (out_w + stride - 1) / stride != wi) {
        throw ShapeError("conv2d_transpose: output " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " does not match input " + std::to_string(hi) +
                         "x" + std::to_string(wi) + " at stride " + std::to_string(stride));
    }
    // Geometry of the conv this op is the adjoint of.
    const ConvGeom g = make_geom(input.extent(0), kernel.extent(1), out_h, out_w,
                                 kernel.extent(0), kernel.extent(2), kernel.extent(3), stride);

    std::vector<double> out(static_cast<size_t>(g.batch * g.in_ch * g.h * g.w), 0.0);
    conv_bwd_in(input.values().data(), kernel.values().data(), out.data(), g);
    {
        const auto& bv = bias.values();
        for (int64_t b = 0; b < g.batch; ++b) {
            for (int64_t c = 0; c < g.in_ch; ++c) {
                double* plane = out.data() + (b * g.in_ch + c) * g.h * g.w;
                for (int64_t i = 0; i < g.h * g.w; ++i) {
                    plane[i] += bv[static_cast<size_t>(c)];
                }
            }
        }
    }

    const bool rg = grad_enabled() &&
                    (input.requires_grad() || kernel.requires_grad() || bias.requires_grad());
    Tensor result =
        finish_conv(Shape{g.batch, g.in_ch, g.h, g.w}, std::move(out), rg, "conv2d_transpose");
    if (rg) {
        NodePtr nin = input.node();
        NodePtr nk = kernel.node();
        NodePtr nb = bias.node();
        active_tape().record(result.node(), [nin, nk, nb, g](const std::vector<double>& gr) {
            if (nin->requires_grad) {
                conv_fwd(gr.data(), nk->values.data(), nullptr, nin->grad_buffer().data(), g);
            }
            if (nk->requires_grad) {
                conv_bwd_kernel(gr.data(), nin->values.data(), nk->grad_buffer().data(), g);
            }
            if (nb->requires_grad) {
                auto& db = nb->grad_buffer();
                for (int64_t b = 0; b < g.batch; ++b) {
                    for (int64_t c = 0; c < g.in_ch; ++c) {
                        double acc = 0.0;
                        const double* plane = gr.data() + (b * g.in_ch + c) * g.h * g.w;
                        for (int64_t i = 0; i < g.h * g.w; ++i) {
                            acc += plane[i];
                        }
                        db[static_cast<size_t>(c)] += acc;
                    }
                }
            }
        });
    }
    return result;
}

}  // namespace equivae
