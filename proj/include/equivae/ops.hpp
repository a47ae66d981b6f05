#pragma once

#include <vector>

#include "equivae/tensor.hpp"

namespace equivae {

// Binary elementwise ops accept equal shapes, or a second operand whose
// shape is a trailing suffix of the first (it is then repeated over the
// leading batch extents), or a scalar on either side. No other broadcasting.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& a);
/// Errors on non-positive input. Likelihood code wants log_guarded instead.
Tensor log(const Tensor& a);
/// log(max(x, 1e-12)); the clamped region has zero derivative.
Tensor log_guarded(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
Tensor negate(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Reduction over the given axes; an empty axis list is the identity.
Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes);
Tensor reduce_mean(const Tensor& a, const std::vector<int>& axes);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
/// Sum over every axis except the first; [B, ...] -> [B].
Tensor sum_per_row(const Tensor& a);

/// Forward identity that contributes zero gradient to its input.
Tensor stop_gradient(const Tensor& a);

/// Row-wise softmax of a [B, K] tensor, max-shifted for stability.
Tensor softmax_rows(const Tensor& a);

Tensor concat_cols(const Tensor& a, const Tensor& b);  // [B,n] ++ [B,m] -> [B,n+m]
Tensor tile_rows(const Tensor& a, int64_t rows);       // [1,n] -> [rows,n]
/// picks[b] = a[b, cols[b]]; result is [B].
Tensor gather_cols(const Tensor& a, const std::vector<int>& cols);

Tensor reshape(const Tensor& a, const Shape& shape);

/// Cross-correlation with bias. Zero padding is chosen so the output
/// spatial size is ceil(extent / stride): stride 1 preserves H and W,
/// stride 2 halves them (rounding up).
/// input [B,C,H,W], kernel [F,C,kh,kw], bias [F]; stride in {1,2}.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride);

/// Adjoint of conv2d: the forward map equals conv2d's backward-by-input for
/// the geometry (out_h, out_w) -> (H, W). Defaults to out = stride * in;
/// pass explicit extents when the matching conv geometry was odd-sized.
/// input [B,F,H,W], kernel [F,C,kh,kw], bias [C].
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int64_t out_h = -1, int64_t out_w = -1);

}  // namespace equivae
