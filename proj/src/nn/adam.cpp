#include "litevsr/nn/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "litevsr/errors.hpp"

namespace litevsr::nn {

Adam::Adam(ParameterList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  if (!(cfg.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.var.numel(), 0.0);
    v_.emplace_back(p.var.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Node* node = params_[i].var.node();
    if (node->grad.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < node->value.size(); ++j) {
      const double g = node->grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      node->value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

WeightsFile Adam::state() const {
  WeightsFile file;
  file.model = {{"kind", "adam"},
                {"beta1", cfg_.beta1},
                {"beta2", cfg_.beta2},
                {"epsilon", cfg_.epsilon}};
  file.entries.push_back({"step", {1}, DType::kFloat64, {static_cast<double>(steps_)}});
  for (size_t i = 0; i < params_.size(); ++i) {
    file.entries.push_back({"m/" + params_[i].name, params_[i].var.shape(), DType::kFloat64, m_[i]});
    file.entries.push_back({"v/" + params_[i].name, params_[i].var.shape(), DType::kFloat64, v_[i]});
  }
  return file;
}

void Adam::load_state(const WeightsFile& file) {
  const WeightEntry* step = file.find("step");
  if (!step || step->data.size() != 1) throw DataError("optimizer state lacks 'step'");
  steps_ = static_cast<int64_t>(step->data[0]);
  for (size_t i = 0; i < params_.size(); ++i) {
    const WeightEntry* m = file.find("m/" + params_[i].name);
    const WeightEntry* v = file.find("v/" + params_[i].name);
    if (!m || !v || m->data.size() != m_[i].size() || v->data.size() != v_[i].size()) {
      throw DataError(fmt::format("optimizer state missing moments for '{}'", params_[i].name));
    }
    m_[i] = m->data;
    v_[i] = v->data;
  }
}

}  // namespace litevsr::nn
