#pragma once

#include <span>
#include <vector>

#include "litevsr/nn/tensor.hpp"
#include "litevsr/types.hpp"

namespace litevsr {

struct CtcResult {
  double nll = 0.0;  // -log p(target | logits)
  Matrix grad;       // d nll / d logits, [T, C]
};

// Forward-backward over the blank-augmented target lattice in log space.
// logits are unnormalized [T, C]; blank is a class index outside the target
// ids. Throws DataError when no alignment exists (target too long for T).
CtcResult ctc_forward_backward(const Eigen::Ref<const Matrix>& logits,
                               std::span<const int> target, int blank);

// Minimum number of frames that can emit target (repeats need a blank).
int ctc_min_frames(std::span<const int> target);

// Differentiable negative log-likelihood of one sequence, shape [1].
nn::Var ctc_loss(const nn::Var& logits, std::span<const int> target, int blank);

// Mean negative log-likelihood over a padded batch of logits.
double ctc_loss(const BatchedFeatures& logits, std::span<const TokenSequence> targets, int blank);

}  // namespace litevsr
