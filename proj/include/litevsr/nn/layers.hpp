#pragma once

#include <array>
#include <string>
#include <vector>

#include "litevsr/nn/ops.hpp"
#include "litevsr/nn/tensor.hpp"
#include "litevsr/rng.hpp"

namespace litevsr::nn {

struct NamedParameter {
  std::string name;
  Var var;
};
using ParameterList = std::vector<NamedParameter>;

size_t parameter_count(const ParameterList& params);
// FNV-1a over the raw parameter bytes in list order.
uint64_t parameter_checksum(const ParameterList& params);
void zero_grad(const ParameterList& params);
void set_requires_grad(const ParameterList& params, bool flag);
double global_grad_norm(const ParameterList& params);
// Scales gradients so the global norm is at most max_norm; returns the norm
// before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);
// Parameters whose name starts with prefix.
ParameterList select_prefix(const ParameterList& params, const std::string& prefix);

Var uniform_parameter(Shape shape, double bound, Rng& rng);
Var constant_parameter(Shape shape, double value);

class Linear {
 public:
  Linear() = default;
  Linear(int in_dim, int out_dim, Rng& rng, bool bias = true);

  Var operator()(const Var& x) const { return linear(x, weight_, bias_); }
  void collect(ParameterList& out, const std::string& prefix) const;
  int in_dim() const { return weight_.dim(0); }
  int out_dim() const { return weight_.dim(1); }

 private:
  Var weight_;  // [in, out]
  Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Var operator()(const Var& x) const { return layer_norm(x, gamma_, beta_); }
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  Var gamma_;
  Var beta_;
};

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int in_channels, int out_channels, std::array<int, 3> kernel,
         Conv3dGeometry geometry, Rng& rng);

  Var operator()(const Var& x) const { return conv3d(x, weight_, bias_, geometry_); }
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  Var weight_;  // [kt, kh, kw, Cin, Cout]
  Var bias_;
  Conv3dGeometry geometry_;
};

struct ConformerConfig {
  int dim = 32;
  int heads = 4;
  int ff_mult = 4;
  int conv_kernel = 5;
};

// Macaron Conformer block: half-step FFN, self-attention, convolution module,
// half-step FFN, final LayerNorm. The convolution module normalizes with a
// LayerNorm so every sequence is processed independently of its batch.
class ConformerBlock {
 public:
  ConformerBlock() = default;
  ConformerBlock(const ConformerConfig& cfg, Rng& rng);

  Var operator()(const Var& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  Var feed_forward(const Var& x, int which) const;
  Var attention(const Var& x) const;
  Var convolution(const Var& x) const;

  ConformerConfig cfg_;
  LayerNorm ff_norm_[2];
  Linear ff_up_[2];
  Linear ff_down_[2];
  LayerNorm att_norm_;
  Linear att_q_, att_k_, att_v_, att_out_;
  LayerNorm conv_norm_;
  Linear conv_in_;
  Var dw_weight_;
  Var dw_bias_;
  LayerNorm dw_norm_;
  Linear conv_out_;
  LayerNorm out_norm_;
};

}  // namespace litevsr::nn
