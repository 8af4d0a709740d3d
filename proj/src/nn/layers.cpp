#include "litevsr/nn/layers.hpp"

#include <cmath>
#include <cstring>

namespace litevsr::nn {

size_t parameter_count(const ParameterList& params) {
  size_t n = 0;
  for (const auto& p : params) n += p.var.numel();
  return n;
}

uint64_t parameter_checksum(const ParameterList& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (double v : p.var.value()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) p.var.zero_grad();
}

void set_requires_grad(const ParameterList& params, bool flag) {
  for (const auto& p : params) p.var.set_requires_grad(flag);
}

double global_grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : p.var.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      for (double& g : p.var.node()->grad) g *= factor;
    }
  }
  return norm;
}

ParameterList select_prefix(const ParameterList& params, const std::string& prefix) {
  ParameterList out;
  for (const auto& p : params) {
    if (p.name.starts_with(prefix)) out.push_back(p);
  }
  return out;
}

Var uniform_parameter(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Var::leaf(std::move(shape), std::move(v));
}

Var constant_parameter(Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return Var::leaf(std::move(shape), std::move(v));
}

Linear::Linear(int in_dim, int out_dim, Rng& rng, bool bias)
    : weight_(uniform_parameter({in_dim, out_dim}, 1.0 / std::sqrt(in_dim), rng)) {
  if (bias) bias_ = constant_parameter({out_dim}, 0.0);
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_});
  if (bias_.defined()) out.push_back({prefix + "bias", bias_});
}

LayerNorm::LayerNorm(int dim)
    : gamma_(constant_parameter({dim}, 1.0)), beta_(constant_parameter({dim}, 0.0)) {}

void LayerNorm::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "gamma", gamma_});
  out.push_back({prefix + "beta", beta_});
}

Conv3d::Conv3d(int in_channels, int out_channels, std::array<int, 3> kernel,
               Conv3dGeometry geometry, Rng& rng)
    : geometry_(geometry) {
  const int fan_in = kernel[0] * kernel[1] * kernel[2] * in_channels;
  weight_ = uniform_parameter({kernel[0], kernel[1], kernel[2], in_channels, out_channels},
                              std::sqrt(3.0 / fan_in), rng);
  bias_ = constant_parameter({out_channels}, 0.0);
}

void Conv3d::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_});
  out.push_back({prefix + "bias", bias_});
}

ConformerBlock::ConformerBlock(const ConformerConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int d = cfg.dim;
  for (int i = 0; i < 2; ++i) {
    ff_norm_[i] = LayerNorm(d);
    ff_up_[i] = Linear(d, d * cfg.ff_mult, rng);
    ff_down_[i] = Linear(d * cfg.ff_mult, d, rng);
  }
  att_norm_ = LayerNorm(d);
  att_q_ = Linear(d, d, rng);
  att_k_ = Linear(d, d, rng);
  att_v_ = Linear(d, d, rng);
  att_out_ = Linear(d, d, rng);
  conv_norm_ = LayerNorm(d);
  conv_in_ = Linear(d, 2 * d, rng);
  dw_weight_ = uniform_parameter({cfg.conv_kernel, d}, 1.0 / std::sqrt(cfg.conv_kernel), rng);
  dw_bias_ = constant_parameter({d}, 0.0);
  dw_norm_ = LayerNorm(d);
  conv_out_ = Linear(d, d, rng);
  out_norm_ = LayerNorm(d);
}

Var ConformerBlock::feed_forward(const Var& x, int which) const {
  return ff_down_[which](silu(ff_up_[which](ff_norm_[which](x))));
}

Var ConformerBlock::attention(const Var& x) const {
  Var h = att_norm_(x);
  return att_out_(multi_head_attention(att_q_(h), att_k_(h), att_v_(h), cfg_.heads));
}

Var ConformerBlock::convolution(const Var& x) const {
  Var h = glu(conv_in_(conv_norm_(x)));
  h = silu(dw_norm_(depthwise_conv1d(h, dw_weight_, dw_bias_)));
  return conv_out_(h);
}

Var ConformerBlock::operator()(const Var& x) const {
  Var h = add_scaled(x, feed_forward(x, 0), 0.5);
  h = add(h, attention(h));
  h = add(h, convolution(h));
  h = add_scaled(h, feed_forward(h, 1), 0.5);
  return out_norm_(h);
}

void ConformerBlock::collect(ParameterList& out, const std::string& prefix) const {
  for (int i = 0; i < 2; ++i) {
    const std::string ff = prefix + "ff" + std::to_string(i + 1) + ".";
    ff_norm_[i].collect(out, ff + "norm.");
    ff_up_[i].collect(out, ff + "up.");
    ff_down_[i].collect(out, ff + "down.");
  }
  att_norm_.collect(out, prefix + "attn.norm.");
  att_q_.collect(out, prefix + "attn.q.");
  att_k_.collect(out, prefix + "attn.k.");
  att_v_.collect(out, prefix + "attn.v.");
  att_out_.collect(out, prefix + "attn.out.");
  conv_norm_.collect(out, prefix + "conv.norm.");
  conv_in_.collect(out, prefix + "conv.pointwise_in.");
  out.push_back({prefix + "conv.depthwise.weight", dw_weight_});
  out.push_back({prefix + "conv.depthwise.bias", dw_bias_});
  dw_norm_.collect(out, prefix + "conv.depthwise_norm.");
  conv_out_.collect(out, prefix + "conv.pointwise_out.");
  out_norm_.collect(out, prefix + "out_norm.");
}

}  // namespace litevsr::nn
