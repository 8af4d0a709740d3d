#pragma once

#include <span>
#include <vector>

#include "litevsr/nn/tensor.hpp"
#include "litevsr/types.hpp"

// Differentiable operations. Sequences are rank-2 [T, C]; videos are rank-4
// [F, H, W, C]. All storage is row-major double precision.
namespace litevsr::nn {

Var from_matrix(const Matrix& m);
Matrix to_matrix(const Var& v);

Var reshape(const Var& x, Shape shape);
// Slice [begin, end) along the leading axis.
Var slice_rows(const Var& x, int begin, int end);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a + s * b
Var add_scaled(const Var& a, const Var& b, double s);

Var sigmoid(const Var& x);
Var silu(const Var& x);
Var relu(const Var& x);
// Splits the last axis in halves (a, g) and returns a * sigmoid(g).
Var glu(const Var& x);

// [M, K] x [K, N]
Var matmul(const Var& a, const Var& b);
// x [M, K], w [K, N], optional b [N].
Var linear(const Var& x, const Var& w, const Var& b);

// Normalizes over the last axis, then applies per-channel gamma and beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Scaled dot-product self attention over [T, d] projections split into heads.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads);

// Same-padded depthwise convolution over time. x [T, C], w [K, C], b [C].
Var depthwise_conv1d(const Var& x, const Var& w, const Var& b);

struct Conv3dGeometry {
  int stride_t = 1, stride_h = 1, stride_w = 1;
  int pad_t = 0, pad_h = 0, pad_w = 0;
};

// x [F, H, W, Cin], w [kt, kh, kw, Cin, Cout], b [Cout] -> [Fo, Ho, Wo, Cout].
Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dGeometry& geom);

// Mean over H and W: [F, H, W, C] -> [F, C].
Var spatial_mean(const Var& x);
// Non-overlapping mean over `stride` frames; trailing frames are dropped.
Var temporal_mean_pool(const Var& x, int stride);

// x * scale + shift with constant per-column vectors; x is [T, C].
Var affine_columns(const Var& x, std::span<const double> scale, std::span<const double> shift);

Var log_softmax(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
// Sum of squared differences, a scalar.
Var squared_error_sum(const Var& a, const Var& b);
Var add_n(const std::vector<Var>& scalars);

}  // namespace litevsr::nn
