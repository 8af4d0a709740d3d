#include "litevsr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "litevsr/errors.hpp"
#include "litevsr/nn/ops.hpp"

namespace litevsr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

int ctc_min_frames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

CtcResult ctc_forward_backward(const Eigen::Ref<const Matrix>& logits,
                               std::span<const int> target, int blank) {
  const int T = static_cast<int>(logits.rows());
  const int C = static_cast<int>(logits.cols());
  if (blank < 0 || blank >= C) throw DimensionError(fmt::format("blank {} outside [0, {})", blank, C));
  for (int id : target) {
    if (id < 0 || id >= C || id == blank) {
      throw DataError(fmt::format("target id {} invalid for {} classes with blank {}", id, C, blank));
    }
  }
  if (T == 0) throw DataError("ctc: zero-length logits");
  if (ctc_min_frames(target) > T) {
    throw DataError(fmt::format("ctc: target of length {} needs at least {} frames, got {}",
                                target.size(), ctc_min_frames(target), T));
  }

  Matrix lp(T, C);
  for (int t = 0; t < T; ++t) {
    const double m = logits.row(t).maxCoeff();
    const double lse = m + std::log((logits.row(t).array() - m).exp().sum());
    lp.row(t) = logits.row(t).array() - lse;
  }

  const int S = 2 * static_cast<int>(target.size()) + 1;
  auto label = [&](int s) { return s % 2 == 0 ? blank : target[s / 2]; };
  auto can_skip = [&](int s) { return s % 2 == 1 && s >= 2 && label(s) != label(s - 2); };

  Matrix alpha = Matrix::Constant(T, S, kNegInf);
  alpha(0, 0) = lp(0, blank);
  if (S > 1) alpha(0, 1) = lp(0, label(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, label(s));
    }
  }

  // beta(t, s): log-probability of emitting frames t+1..T-1 given state s at t.
  Matrix beta = Matrix::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = 0.0;
  if (S > 1) beta(T - 1, S - 2) = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta(t + 1, s) + lp(t + 1, label(s));
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1) + lp(t + 1, label(s + 1)));
      if (s + 2 < S && can_skip(s + 2)) {
        b = log_add(b, beta(t + 1, s + 2) + lp(t + 1, label(s + 2)));
      }
      beta(t, s) = b;
    }
  }

  double log_p = alpha(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, alpha(T - 1, S - 2));
  if (!std::isfinite(log_p)) throw NumericError("ctc: non-finite likelihood");

  CtcResult r;
  r.nll = -log_p;
  r.grad = lp.array().exp();
  for (int t = 0; t < T; ++t) {
    std::vector<double> occ(C, kNegInf);
    for (int s = 0; s < S; ++s) occ[label(s)] = log_add(occ[label(s)], alpha(t, s) + beta(t, s));
    for (int c = 0; c < C; ++c) {
      if (occ[c] != kNegInf) r.grad(t, c) -= std::exp(occ[c] - log_p);
    }
  }
  return r;
}

nn::Var ctc_loss(const nn::Var& logits, std::span<const int> target, int blank) {
  if (logits.rank() != 2) throw DimensionError("ctc_loss: logits must be [T, C]");
  const Matrix x = nn::to_matrix(logits);
  auto r = ctc_forward_backward(x, target, blank);
  return nn::make_result({1}, {r.nll}, {logits}, [grad = std::move(r.grad)](nn::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    const double up = n.grad[0];
    for (size_t i = 0; i < g.size(); ++i) g[i] += up * grad.data()[i];
  });
}

double ctc_loss(const BatchedFeatures& logits, std::span<const TokenSequence> targets, int blank) {
  if (logits.batch() == 0) throw DataError("ctc_loss: empty batch");
  if (static_cast<int>(targets.size()) != logits.batch()) {
    throw DimensionError(fmt::format("{} targets for a batch of {}", targets.size(),
                                     logits.batch()));
  }
  double total = 0.0;
  for (int n = 0; n < logits.batch(); ++n) {
    total += ctc_forward_backward(logits.valid_sample(n), targets[n].ids, blank).nll;
  }
  return total / logits.batch();
}

}  // namespace litevsr
