#pragma once

#include <cstdint>
#include <vector>

#include "litevsr/nn/layers.hpp"
#include "litevsr/nn/weights.hpp"

namespace litevsr::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

// Adam with bias correction. The learning rate is supplied per step so an
// external schedule drives it.
class Adam {
 public:
  Adam(ParameterList params, AdamConfig cfg);

  void step(double lr);
  int64_t steps() const { return steps_; }
  const ParameterList& parameters() const { return params_; }

  // Moments as "m/<name>" and "v/<name>" entries plus a scalar "step".
  WeightsFile state() const;
  void load_state(const WeightsFile& file);

 private:
  ParameterList params_;
  AdamConfig cfg_;
  int64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace litevsr::nn
