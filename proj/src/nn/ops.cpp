#include "litevsr/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "litevsr/errors.hpp"

namespace litevsr::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

Node& parent(Node& n, size_t i) { return *n.parents[i]; }

bool wants(Node& n, size_t i) { return n.parents[i]->requires_grad; }

ConstMapMat cmat(std::span<const double> v, int rows, int cols) {
  return ConstMapMat(v.data(), rows, cols);
}
ConstMapMat cmat(const std::vector<double>& v, int rows, int cols) {
  return ConstMapMat(v.data(), rows, cols);
}
MapMat mat(std::vector<double>& v, int rows, int cols) { return MapMat(v.data(), rows, cols); }

void require_rank(const Var& x, int rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(fmt::format("{}: expected rank {}, got shape {}", op, rank,
                                     shape_string(x.shape())));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op,
                                     shape_string(a.shape()), shape_string(b.shape())));
  }
}

// Last-axis size and the number of rows in front of it.
std::pair<int, int> rows_cols(const Var& x) {
  const int cols = x.shape().back();
  return {static_cast<int>(x.numel() / static_cast<size_t>(cols)), cols};
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto in = x.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](Node& n) {
    Node& p = parent(n, 0);
    auto& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * deriv(p.value[i], n.value[i]);
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var from_matrix(const Matrix& m) {
  return Var::constant({static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                       std::vector<double>(m.data(), m.data() + m.size()));
}

Matrix to_matrix(const Var& v) {
  require_rank(v, 2, "to_matrix");
  Matrix m(v.dim(0), v.dim(1));
  std::copy(v.value().begin(), v.value().end(), m.data());
  return m;
}

Var reshape(const Var& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError(fmt::format("reshape: {} to {}", shape_string(x.shape()),
                                     shape_string(shape)));
  }
  return make_result(std::move(shape), {x.value().begin(), x.value().end()}, {x},
                     [](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                     });
}

Var slice_rows(const Var& x, int begin, int end) {
  const int rows = x.dim(0);
  if (begin < 0 || end > rows || begin > end) {
    throw DimensionError(fmt::format("slice_rows: [{}, {}) of {}", begin, end, rows));
  }
  const size_t stride = x.numel() / static_cast<size_t>(rows);
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto v = x.value();
  std::vector<double> out(v.begin() + begin * stride, v.begin() + end * stride);
  return make_result(std::move(shape), std::move(out), {x}, [begin, stride](Node& n) {
    auto& g = parent(n, 0).ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) g[begin * stride + i] += n.grad[i];
  });
}

Var add(const Var& a, const Var& b) { return add_scaled(a, b, 1.0); }

Var sub(const Var& a, const Var& b) { return add_scaled(a, b, -1.0); }

Var add_scaled(const Var& a, const Var& b, double s) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.value();
  auto bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [s](Node& n) {
    if (wants(n, 0)) {
      auto& g = parent(n, 0).ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = parent(n, 1).ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.value();
  auto bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var sigmoid(const Var& x) {
  return unary(x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var glu(const Var& x) {
  const auto [rows, cols] = rows_cols(x);
  if (cols % 2 != 0) throw DimensionError("glu: last axis must be even");
  const int half = cols / 2;
  Shape shape = x.shape();
  shape.back() = half;
  std::vector<double> gate(static_cast<size_t>(rows) * half);
  std::vector<double> out(gate.size());
  auto v = x.value();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < half; ++c) {
      const double s = sigmoid_scalar(v[r * cols + half + c]);
      gate[r * half + c] = s;
      out[r * half + c] = v[r * cols + c] * s;
    }
  }
  return make_result(std::move(shape), std::move(out), {x},
                     [gate = std::move(gate), rows, cols, half](Node& n) {
                       Node& p = parent(n, 0);
                       auto& g = p.ensure_grad();
                       for (int r = 0; r < rows; ++r) {
                         for (int c = 0; c < half; ++c) {
                           const double s = gate[r * half + c];
                           const double a = p.value[r * cols + c];
                           const double up = n.grad[r * half + c];
                           g[r * cols + c] += up * s;
                           g[r * cols + half + c] += up * a * s * (1.0 - s);
                         }
                       }
                     });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n_cols = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError(fmt::format("matmul: {} x {}", shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  std::vector<double> out(static_cast<size_t>(m) * n_cols);
  mat(out, m, n_cols).noalias() = cmat(a.value(), m, k) * cmat(b.value(), k, n_cols);
  return make_result({m, n_cols}, std::move(out), {a, b}, [m, k, n_cols](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    auto up = cmat(n.grad, m, n_cols);
    if (pa.requires_grad) {
      mat(pa.ensure_grad(), m, k).noalias() += up * cmat(pb.value, k, n_cols).transpose();
    }
    if (pb.requires_grad) {
      mat(pb.ensure_grad(), k, n_cols).noalias() += cmat(pa.value, m, k).transpose() * up;
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto [m, k] = rows_cols(x);
  require_rank(w, 2, "linear");
  if (w.dim(0) != k) {
    throw DimensionError(fmt::format("linear: input {} vs weight {}", shape_string(x.shape()),
                                     shape_string(w.shape())));
  }
  const int n_out = w.dim(1);
  const bool has_bias = b.defined();
  if (has_bias && static_cast<int>(b.numel()) != n_out) {
    throw DimensionError("linear: bias size mismatch");
  }
  std::vector<double> out(static_cast<size_t>(m) * n_out);
  auto y = mat(out, m, n_out);
  y.noalias() = cmat(x.value(), m, k) * cmat(w.value(), k, n_out);
  if (has_bias) y.rowwise() += ConstMapVec(b.value().data(), n_out).transpose();
  Shape shape = x.shape();
  shape.back() = n_out;
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(shape), std::move(out), std::move(inputs),
                     [m, k, n_out, has_bias](Node& n) {
                       Node& px = parent(n, 0);
                       Node& pw = parent(n, 1);
                       auto up = cmat(n.grad, m, n_out);
                       if (px.requires_grad) {
                         mat(px.ensure_grad(), m, k).noalias() +=
                             up * cmat(pw.value, k, n_out).transpose();
                       }
                       if (pw.requires_grad) {
                         mat(pw.ensure_grad(), k, n_out).noalias() +=
                             cmat(px.value, m, k).transpose() * up;
                       }
                       if (has_bias && wants(n, 2)) {
                         MapVec(parent(n, 2).ensure_grad().data(), n_out) +=
                             up.colwise().sum().transpose();
                       }
                     });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const auto [rows, cols] = rows_cols(x);
  if (static_cast<int>(gamma.numel()) != cols || static_cast<int>(beta.numel()) != cols) {
    throw DimensionError("layer_norm: affine size mismatch");
  }
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  auto v = x.value();
  auto gv = gamma.value();
  auto bv = beta.value();
  for (int r = 0; r < rows; ++r) {
    const double* row = v.data() + static_cast<size_t>(r) * cols;
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += row[c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
      const size_t i = static_cast<size_t>(r) * cols + c;
      xhat[i] = (row[c] - mu) * is;
      out[i] = xhat[i] * gv[c] + bv[c];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Node& n) {
        Node& px = parent(n, 0);
        Node& pg = parent(n, 1);
        Node& pb = parent(n, 2);
        if (pg.requires_grad || pb.requires_grad) {
          auto& gg = pg.ensure_grad();
          auto& gb = pb.ensure_grad();
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
              const size_t i = static_cast<size_t>(r) * cols + c;
              gg[c] += n.grad[i] * xhat[i];
              gb[c] += n.grad[i];
            }
          }
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          for (int r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (int c = 0; c < cols; ++c) {
              const size_t i = static_cast<size_t>(r) * cols + c;
              const double d = n.grad[i] * pg.value[c];
              mean_d += d;
              mean_dx += d * xhat[i];
            }
            mean_d /= cols;
            mean_dx /= cols;
            for (int c = 0; c < cols; ++c) {
              const size_t i = static_cast<size_t>(r) * cols + c;
              const double d = n.grad[i] * pg.value[c];
              gx[i] += inv_std[r] * (d - mean_d - xhat[i] * mean_dx);
            }
          }
        }
      });
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads) {
  require_rank(q, 2, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const int t = q.dim(0);
  const int d = q.dim(1);
  if (heads < 1 || d % heads != 0) {
    throw DimensionError(fmt::format("attention: dim {} not divisible by {} heads", d, heads));
  }
  const int dk = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  auto qm = cmat(q.value(), t, d);
  auto km = cmat(k.value(), t, d);
  auto vm = cmat(v.value(), t, d);
  std::vector<double> out(static_cast<size_t>(t) * d);
  auto om = mat(out, t, d);
  std::vector<RowMat> probs(heads);
  for (int h = 0; h < heads; ++h) {
    RowMat s = sc * qm.middleCols(h * dk, dk) * km.middleCols(h * dk, dk).transpose();
    for (int r = 0; r < t; ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    om.middleCols(h * dk, dk).noalias() = s * vm.middleCols(h * dk, dk);
    probs[h] = std::move(s);
  }
  return make_result(
      q.shape(), std::move(out), {q, k, v},
      [probs = std::move(probs), t, d, dk, heads, sc](Node& n) {
        Node& pq = parent(n, 0);
        Node& pk = parent(n, 1);
        Node& pv = parent(n, 2);
        auto up = cmat(n.grad, t, d);
        auto qm = cmat(pq.value, t, d);
        auto km = cmat(pk.value, t, d);
        auto vm = cmat(pv.value, t, d);
        for (int h = 0; h < heads; ++h) {
          const RowMat& p = probs[h];
          auto dout = up.middleCols(h * dk, dk);
          if (pv.requires_grad) {
            mat(pv.ensure_grad(), t, d).middleCols(h * dk, dk).noalias() += p.transpose() * dout;
          }
          if (!pq.requires_grad && !pk.requires_grad) continue;
          RowMat dp = dout * vm.middleCols(h * dk, dk).transpose();
          RowMat ds(t, t);
          for (int r = 0; r < t; ++r) {
            const double dot = dp.row(r).dot(p.row(r));
            ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
          }
          ds *= sc;
          if (pq.requires_grad) {
            mat(pq.ensure_grad(), t, d).middleCols(h * dk, dk).noalias() +=
                ds * km.middleCols(h * dk, dk);
          }
          if (pk.requires_grad) {
            mat(pk.ensure_grad(), t, d).middleCols(h * dk, dk).noalias() +=
                ds.transpose() * qm.middleCols(h * dk, dk);
          }
        }
      });
}

Var depthwise_conv1d(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(w, 2, "depthwise_conv1d");
  const int t = x.dim(0);
  const int c = x.dim(1);
  const int ksize = w.dim(0);
  if (w.dim(1) != c || static_cast<int>(b.numel()) != c || ksize % 2 == 0) {
    throw DimensionError("depthwise_conv1d: weight must be [odd K, C] with bias [C]");
  }
  const int pad = ksize / 2;
  std::vector<double> out(static_cast<size_t>(t) * c);
  auto xv = x.value();
  auto wv = w.value();
  auto bv = b.value();
  for (int i = 0; i < t; ++i) {
    double* o = out.data() + static_cast<size_t>(i) * c;
    for (int ch = 0; ch < c; ++ch) o[ch] = bv[ch];
    for (int j = 0; j < ksize; ++j) {
      const int src = i + j - pad;
      if (src < 0 || src >= t) continue;
      const double* xi = xv.data() + static_cast<size_t>(src) * c;
      const double* wj = wv.data() + static_cast<size_t>(j) * c;
      for (int ch = 0; ch < c; ++ch) o[ch] += xi[ch] * wj[ch];
    }
  }
  return make_result({t, c}, std::move(out), {x, w, b}, [t, c, ksize, pad](Node& n) {
    Node& px = parent(n, 0);
    Node& pw = parent(n, 1);
    Node& pb = parent(n, 2);
    double* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
    double* gw = pw.requires_grad ? pw.ensure_grad().data() : nullptr;
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (int i = 0; i < t; ++i) {
        for (int ch = 0; ch < c; ++ch) gb[ch] += n.grad[static_cast<size_t>(i) * c + ch];
      }
    }
    for (int i = 0; i < t; ++i) {
      const double* up = n.grad.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < ksize; ++j) {
        const int src = i + j - pad;
        if (src < 0 || src >= t) continue;
        const size_t xo = static_cast<size_t>(src) * c;
        const size_t wo = static_cast<size_t>(j) * c;
        for (int ch = 0; ch < c; ++ch) {
          if (gx) gx[xo + ch] += up[ch] * pw.value[wo + ch];
          if (gw) gw[wo + ch] += up[ch] * px.value[xo + ch];
        }
      }
    }
  });
}

namespace {

struct ConvDims {
  int f, h, w, cin;
  int kt, kh, kw, cout;
  int fo, ho, wo;
  Conv3dGeometry g;

  int patch() const { return kt * kh * kw * cin; }
  int out_positions() const { return fo * ho * wo; }
};

// Walks every (output position, kernel tap) pair whose input lies inside the
// volume, calling fn(row, col_offset, input_offset) with offsets in doubles.
template <typename Fn>
void for_each_tap(const ConvDims& d, Fn fn) {
  int row = 0;
  for (int of = 0; of < d.fo; ++of) {
    for (int oh = 0; oh < d.ho; ++oh) {
      for (int ow = 0; ow < d.wo; ++ow, ++row) {
        int tap = 0;
        for (int dt = 0; dt < d.kt; ++dt) {
          const int fi = of * d.g.stride_t - d.g.pad_t + dt;
          for (int dh = 0; dh < d.kh; ++dh) {
            const int hi = oh * d.g.stride_h - d.g.pad_h + dh;
            for (int dw = 0; dw < d.kw; ++dw, ++tap) {
              const int wi = ow * d.g.stride_w - d.g.pad_w + dw;
              if (fi < 0 || fi >= d.f || hi < 0 || hi >= d.h || wi < 0 || wi >= d.w) continue;
              fn(row, tap * d.cin,
                 ((static_cast<size_t>(fi) * d.h + hi) * d.w + wi) * d.cin);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dGeometry& geom) {
  require_rank(x, 4, "conv3d");
  if (w.rank() != 5) throw DimensionError("conv3d: weight must be [kt, kh, kw, Cin, Cout]");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(1), w.dim(2), w.dim(4),
             0, 0, 0, geom};
  if (w.dim(3) != d.cin) {
    throw DimensionError(fmt::format("conv3d: input channels {} vs weight {}", d.cin,
                                     shape_string(w.shape())));
  }
  if (static_cast<int>(b.numel()) != d.cout) throw DimensionError("conv3d: bias size mismatch");
  d.fo = (d.f + 2 * geom.pad_t - d.kt) / geom.stride_t + 1;
  d.ho = (d.h + 2 * geom.pad_h - d.kh) / geom.stride_h + 1;
  d.wo = (d.w + 2 * geom.pad_w - d.kw) / geom.stride_w + 1;
  if (d.fo < 1 || d.ho < 1 || d.wo < 1) {
    throw DimensionError(fmt::format("conv3d: input {} too small for kernel {}",
                                     shape_string(x.shape()), shape_string(w.shape())));
  }

  const int rows = d.out_positions();
  const int patch = d.patch();
  auto xv = x.value();
  RowMat cols = RowMat::Zero(rows, patch);
  for_each_tap(d, [&](int row, int col, size_t in) {
    std::copy_n(xv.data() + in, d.cin, cols.data() + static_cast<size_t>(row) * patch + col);
  });

  std::vector<double> out(static_cast<size_t>(rows) * d.cout);
  auto y = mat(out, rows, d.cout);
  y.noalias() = cols * cmat(w.value(), patch, d.cout);
  y.rowwise() += ConstMapVec(b.value().data(), d.cout).transpose();

  return make_result(
      {d.fo, d.ho, d.wo, d.cout}, std::move(out), {x, w, b},
      [cols = std::move(cols), d, rows, patch](Node& n) {
        Node& px = parent(n, 0);
        Node& pw = parent(n, 1);
        Node& pb = parent(n, 2);
        auto up = cmat(n.grad, rows, d.cout);
        if (pw.requires_grad) {
          mat(pw.ensure_grad(), patch, d.cout).noalias() += cols.transpose() * up;
        }
        if (pb.requires_grad) {
          MapVec(pb.ensure_grad().data(), d.cout) += up.colwise().sum().transpose();
        }
        if (px.requires_grad) {
          RowMat dcols = up * cmat(pw.value, patch, d.cout).transpose();
          auto& gx = px.ensure_grad();
          for_each_tap(d, [&](int row, int col, size_t in) {
            const double* src = dcols.data() + static_cast<size_t>(row) * patch + col;
            for (int c = 0; c < d.cin; ++c) gx[in + c] += src[c];
          });
        }
      });
}

Var spatial_mean(const Var& x) {
  require_rank(x, 4, "spatial_mean");
  const int f = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  std::vector<double> out(static_cast<size_t>(f) * c, 0.0);
  auto v = x.value();
  for (int i = 0; i < f; ++i) {
    for (int p = 0; p < hw; ++p) {
      const double* src = v.data() + (static_cast<size_t>(i) * hw + p) * c;
      for (int ch = 0; ch < c; ++ch) out[static_cast<size_t>(i) * c + ch] += src[ch];
    }
  }
  for (double& o : out) o /= hw;
  return make_result({f, c}, std::move(out), {x}, [f, hw, c](Node& n) {
    auto& g = parent(n, 0).ensure_grad();
    for (int i = 0; i < f; ++i) {
      for (int p = 0; p < hw; ++p) {
        double* dst = g.data() + (static_cast<size_t>(i) * hw + p) * c;
        for (int ch = 0; ch < c; ++ch) dst[ch] += n.grad[static_cast<size_t>(i) * c + ch] / hw;
      }
    }
  });
}

Var temporal_mean_pool(const Var& x, int stride) {
  require_rank(x, 2, "temporal_mean_pool");
  if (stride < 1) throw DimensionError("temporal_mean_pool: stride must be >= 1");
  if (stride == 1) return x;
  const int t = x.dim(0) / stride;
  const int c = x.dim(1);
  std::vector<double> out(static_cast<size_t>(t) * c, 0.0);
  auto v = x.value();
  for (int i = 0; i < t * stride; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      out[static_cast<size_t>(i / stride) * c + ch] += v[static_cast<size_t>(i) * c + ch] / stride;
    }
  }
  return make_result({t, c}, std::move(out), {x}, [t, c, stride](Node& n) {
    auto& g = parent(n, 0).ensure_grad();
    for (int i = 0; i < t * stride; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        g[static_cast<size_t>(i) * c + ch] += n.grad[static_cast<size_t>(i / stride) * c + ch] / stride;
      }
    }
  });
}

Var affine_columns(const Var& x, std::span<const double> scale_v,
                   std::span<const double> shift_v) {
  const auto [rows, cols] = rows_cols(x);
  if (static_cast<int>(scale_v.size()) != cols || static_cast<int>(shift_v.size()) != cols) {
    throw DimensionError(fmt::format("affine_columns: {} columns vs vectors of {}", cols,
                                     scale_v.size()));
  }
  std::vector<double> sc(scale_v.begin(), scale_v.end());
  std::vector<double> out(x.numel());
  auto v = x.value();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const size_t i = static_cast<size_t>(r) * cols + c;
      out[i] = v[i] * scale_v[c] + shift_v[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [sc = std::move(sc), rows, cols](Node& n) {
    auto& g = parent(n, 0).ensure_grad();
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const size_t i = static_cast<size_t>(r) * cols + c;
        g[i] += n.grad[i] * sc[c];
      }
    }
  });
}

Var log_softmax(const Var& x) {
  const auto [rows, cols] = rows_cols(x);
  std::vector<double> out(x.numel());
  auto v = x.value();
  for (int r = 0; r < rows; ++r) {
    const double* row = v.data() + static_cast<size_t>(r) * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (int c = 0; c < cols; ++c) out[static_cast<size_t>(r) * cols + c] = row[c] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& n) {
    auto& g = parent(n, 0).ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const size_t o = static_cast<size_t>(r) * cols;
      double gs = 0.0;
      for (int c = 0; c < cols; ++c) gs += n.grad[o + c];
      for (int c = 0; c < cols; ++c) g[o + c] += n.grad[o + c] - std::exp(n.value[o + c]) * gs;
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  return make_result({1}, {s}, {x}, [](Node& n) {
    auto& g = parent(n, 0).ensure_grad();
    for (double& gi : g) gi += n.grad[0];
  });
}

Var mean(const Var& x) {
  if (x.numel() == 0) throw NumericError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Var squared_error_sum(const Var& a, const Var& b) {
  require_same_shape(a, b, "squared_error_sum");
  double s = 0.0;
  auto av = a.value();
  auto bv = b.value();
  for (size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  return make_result({1}, {s}, {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    const double up = 2.0 * n.grad[0];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += up * (pa.value[i] - pb.value[i]);
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= up * (pa.value[i] - pb.value[i]);
    }
  });
}

Var add_n(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw NumericError("add_n of an empty list");
  double s = 0.0;
  for (const auto& v : scalars) s += v.item();
  return make_result({1}, {s}, scalars, [](Node& n) {
    for (auto& p : n.parents) {
      if (p->requires_grad) p->ensure_grad()[0] += n.grad[0];
    }
  });
}

}  // namespace litevsr::nn
