#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "litevsr/nn/layers.hpp"
#include "litevsr/rng.hpp"
#include "litevsr/types.hpp"
#include "litevsr/visual_base.hpp"

namespace litevsr::test {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "tmp";
    std::replace(name.begin(), name.end(), '/', '_');
    path_ = std::filesystem::temp_directory_path() / ("litevsr_test_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline std::vector<double> random_values(size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Compares the analytic gradient of a scalar loss against central differences
// for `samples` randomly chosen entries of the given leaves.
inline GradCheck check_gradients(const std::vector<nn::Var>& leaves,
                                 const std::function<nn::Var()>& loss_fn, int samples, Rng& rng,
                                 double h = 1e-5) {
  for (const auto& v : leaves) v.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  size_t total = 0;
  for (const auto& v : leaves) {
    if (v.has_grad()) {
      analytic.emplace_back(v.grad().begin(), v.grad().end());
    } else {
      analytic.emplace_back(v.numel(), 0.0);
    }
    total += v.numel();
  }
  GradCheck out;
  for (int s = 0; s < samples; ++s) {
    size_t flat = rng.index(total);
    size_t which = 0;
    while (flat >= leaves[which].numel()) flat -= leaves[which].numel(), ++which;
    nn::Var leaf = leaves[which];
    auto values = leaf.mutable_value();
    const double orig = values[flat];
    double plus = 0.0;
    double minus = 0.0;
    {
      nn::NoGradGuard guard;
      values[flat] = orig + h;
      plus = loss_fn().item();
      values[flat] = orig - h;
      minus = loss_fn().item();
      values[flat] = orig;
    }
    const double numeric = (plus - minus) / (2.0 * h);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[which][flat], numeric));
    ++out.checked;
  }
  return out;
}

inline std::vector<nn::Var> vars_of(const nn::ParameterList& params) {
  std::vector<nn::Var> out;
  for (const auto& p : params) out.push_back(p.var);
  return out;
}

// Visual base small enough for exhaustive finite-difference checks.
inline VisualBaseConfig tiny_visual_config() {
  VisualBaseConfig cfg;
  cfg.conv3d_stages = 1;
  cfg.frontend_channels = 2;
  cfg.backbone_channels = {4, 4, 4};
  cfg.conformer_layers = 1;
  cfg.conformer_dim = 8;
  cfg.num_heads = 2;
  cfg.ff_mult = 1;
  cfg.conv_kernel = 3;
  cfg.output_dim = 8;
  cfg.input_size = 16;
  return cfg;
}

inline VideoTensor random_video(int frames, int size, int channels, Rng& rng) {
  VideoTensor v;
  v.frames = frames;
  v.height = v.width = size;
  v.channels = channels;
  v.data.resize(static_cast<size_t>(frames) * size * size * channels);
  for (double& x : v.data) x = rng.uniform();
  return v;
}

}  // namespace litevsr::test
