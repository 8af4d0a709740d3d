#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/ctc.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/nn/ops.hpp"
#include "litevsr/training.hpp"
#include "test_util.hpp"

namespace litevsr {
namespace {

TEST(Schedule, NoamKeyValues) {
  const ScheduleConfig s{100, 8e-4};
  EXPECT_EQ(noam_lr(100, s), 8e-4);
  EXPECT_EQ(noam_lr(50, s), 4e-4);
  EXPECT_EQ(noam_lr(400, s), 4e-4);
  EXPECT_DOUBLE_EQ(noam_lr(1, s), 8e-6);
  EXPECT_THROW(noam_lr(0, s), ConfigError);
}

TEST(Schedule, MonotoneAroundPeak) {
  const ScheduleConfig s{37, 1e-3};
  for (int64_t t = 1; t < 37; ++t) EXPECT_LT(noam_lr(t, s), noam_lr(t + 1, s));
  for (int64_t t = 37; t < 2000; ++t) EXPECT_GT(noam_lr(t, s), noam_lr(t + 1, s));
}

TEST(EncodingLoss, ScalarExample) {
  const std::vector<Matrix> raw{Matrix::Constant(1, 1, 3.0)};
  const std::vector<Matrix> vis{Matrix::Constant(1, 1, 0.0)};
  NormalizationStats stats;
  stats.mu = Vector::Constant(1, 1.0);
  stats.sigma = Vector::Constant(1, 2.0);
  stats.frame_count = 1;
  EXPECT_DOUBLE_EQ(encoding_loss(pad_batch(std::span<const Matrix>(raw)),
                                 pad_batch(std::span<const Matrix>(vis)), stats),
                   1.0);
}

TEST(EncodingLoss, BatchedMatchesDifferentiableForm) {
  Rng rng(1);
  std::vector<Matrix> raw, vis, targets;
  for (int len : {3, 6, 2}) {
    raw.push_back(test::random_matrix(len, 4, rng, 3.0));
    vis.push_back(test::random_matrix(len, 4, rng));
  }
  std::vector<FeatureSequence> seqs;
  for (const auto& m : raw) seqs.emplace_back(m);
  const auto stats = compute_stats(seqs);
  std::vector<nn::Var> outs;
  for (size_t n = 0; n < raw.size(); ++n) {
    targets.push_back(normalize(raw[n], stats));
    outs.push_back(nn::from_matrix(vis[n]));
  }
  const double batched = encoding_loss(pad_batch(std::span<const Matrix>(raw)),
                                       pad_batch(std::span<const Matrix>(vis)), stats);
  EXPECT_NEAR(encoding_loss(outs, targets).item(), batched, 1e-12);
  std::vector<Matrix> short_vis{vis[0], vis[1].topRows(5), vis[2]};
  EXPECT_THROW(encoding_loss(pad_batch(std::span<const Matrix>(raw)),
                             pad_batch(std::span<const Matrix>(short_vis)), stats),
               DimensionError);
}

// Sums the probability of every frame-level path that collapses to the target.
double ctc_oracle(const Matrix& logits, const std::vector<int>& target, int blank) {
  const int T = static_cast<int>(logits.rows());
  const int C = static_cast<int>(logits.cols());
  Matrix p(T, C);
  for (int t = 0; t < T; ++t) {
    p.row(t) = logits.row(t).array().exp();
    p.row(t) /= p.row(t).sum();
  }
  double total = 0.0;
  std::vector<int> path(T, 0);
  std::function<void(int)> walk = [&](int t) {
    if (t == T) {
      std::vector<int> collapsed;
      int prev = -1;
      for (int c : path) {
        if (c != prev && c != blank) collapsed.push_back(c);
        prev = c;
      }
      if (collapsed == target) {
        double prob = 1.0;
        for (int u = 0; u < T; ++u) prob *= p(u, path[u]);
        total += prob;
      }
      return;
    }
    for (int c = 0; c < C; ++c) {
      path[t] = c;
      walk(t + 1);
    }
  };
  walk(0);
  return -std::log(total);
}

TEST(Ctc, MatchesExhaustiveOracle) {
  Rng rng(2);
  int instances = 0;
  for (int V = 1; V <= 3; ++V) {
    for (int T = 1; T <= 4; ++T) {
      std::vector<std::vector<int>> targets{{}};
      for (int a = 0; a < V; ++a) {
        targets.push_back({a});
        for (int b = 0; b < V; ++b) targets.push_back({a, b});
      }
      for (const auto& target : targets) {
        if (ctc_min_frames(target) > T) continue;
        const Matrix logits = test::random_matrix(T, V + 1, rng, 2.0);
        const double got = ctc_forward_backward(logits, target, V).nll;
        EXPECT_NEAR(got, ctc_oracle(logits, target, V), 1e-6) << "V=" << V << " T=" << T;
        ++instances;
      }
    }
  }
  EXPECT_GT(instances, 50);
}

TEST(Ctc, UniformTwoFramesOneLabel) {
  const Matrix logits = Matrix::Zero(2, 3);
  const std::vector<int> target{0};
  EXPECT_NEAR(ctc_forward_backward(logits, target, 2).nll, 1.0986122886681098, 1e-12);
}

TEST(Ctc, BlankCanSitAnywhere) {
  Rng rng(3);
  const Matrix logits = test::random_matrix(3, 3, rng);
  const std::vector<int> target{1};
  Matrix permuted = logits;
  permuted.col(0).swap(permuted.col(2));
  const std::vector<int> moved{1};
  EXPECT_NEAR(ctc_forward_backward(logits, target, 2).nll,
              ctc_forward_backward(permuted, moved, 0).nll, 1e-12);
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 3 + static_cast<int>(rng.index(5));
    const int C = 3 + static_cast<int>(rng.index(3));
    std::vector<int> target;
    const int len = 1 + static_cast<int>(rng.index(3));
    for (int i = 0; i < len; ++i) target.push_back(static_cast<int>(rng.index(C - 1)));
    if (ctc_min_frames(target) > T) continue;
    nn::Var logits = nn::Var::leaf({T, C}, test::random_values(T * C, rng));
    auto loss = [&] { return ctc_loss(logits, target, C - 1); };
    EXPECT_LT(test::check_gradients({logits}, loss, T * C, rng).max_rel_error, 1e-5);
    const auto direct = ctc_forward_backward(nn::to_matrix(logits), target, C - 1);
    // Rows of softmax minus occupancy sum to zero.
    EXPECT_LT(direct.grad.rowwise().sum().cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Ctc, Errors) {
  const Matrix logits = Matrix::Zero(2, 3);
  EXPECT_EQ(ctc_min_frames(std::vector<int>{1, 1, 0}), 4);
  EXPECT_THROW(ctc_forward_backward(logits, std::vector<int>{0, 0}, 2), DataError);
  EXPECT_THROW(ctc_forward_backward(logits, std::vector<int>{2}, 2), DataError);
  EXPECT_THROW(ctc_forward_backward(Matrix::Zero(0, 3), std::vector<int>{}, 2), DataError);
  EXPECT_THROW(ctc_forward_backward(logits, std::vector<int>{0}, 3), DimensionError);
}

TEST(Ctc, BatchedLossIsMeanOverSequences) {
  Rng rng(5);
  const std::vector<Matrix> logits{test::random_matrix(4, 3, rng), test::random_matrix(6, 3, rng)};
  const std::vector<TokenSequence> targets{{{0, 1}, 2}, {{1}, 2}};
  const double want = (ctc_forward_backward(logits[0], targets[0].ids, 2).nll +
                       ctc_forward_backward(logits[1], targets[1].ids, 2).nll) /
                      2.0;
  EXPECT_NEAR(ctc_loss(pad_batch(std::span<const Matrix>(logits)), targets, 2), want, 1e-12);
}

TEST(Batching, DeterministicEpochPermutations) {
  EXPECT_EQ(batch_indices(7, 4, 10, 3), batch_indices(7, 4, 10, 3));
  EXPECT_NE(batch_indices(1, 10, 10, 3), batch_indices(1, 10, 10, 4));
  std::multiset<int> seen;
  for (int64_t s = 1; s <= 5; ++s) {
    for (int i : batch_indices(s, 4, 10, 9)) seen.insert(i);
  }
  // 20 draws span exactly two epochs of ten.
  for (int i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 2u);
}

std::vector<TrainingExample> toy_examples(int n, Rng& rng, int vocab) {
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.sample_id = "ex" + std::to_string(i);
    ex.clip = test::random_video(6, 16, 1, rng);
    Matrix target(6, 8);
    // Targets depend on frame brightness so they are learnable.
    for (int f = 0; f < 6; ++f) {
      double mean = 0.0;
      for (int p = 0; p < 256; ++p) mean += ex.clip.data[f * 256 + p];
      for (int j = 0; j < 8; ++j) target(f, j) = (mean / 256.0 - 0.5) * (j + 1);
    }
    ex.target = target;
    ex.tokens = {static_cast<int>(rng.index(vocab)), static_cast<int>(rng.index(vocab))};
    if (ex.tokens[0] == ex.tokens[1]) ex.tokens.pop_back();
    ex.labeled = true;
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig quick_config(int64_t steps) {
  TrainConfig cfg;
  cfg.schedule = {5, 3e-3};
  cfg.optimizer.batch_size = 4;
  cfg.steps = steps;
  cfg.seed = 11;
  return cfg;
}

TEST(EncodingLoss, GradientThroughVisualBase) {
  Rng rng(6);
  VisualBase model(test::tiny_visual_config(), 12);
  const auto examples = toy_examples(3, rng, 4);
  auto loss = [&] {
    std::vector<nn::Var> outs;
    std::vector<Matrix> targets;
    for (const auto& ex : examples) {
      outs.push_back(model.forward(ex.clip));
      targets.push_back(*ex.target);
    }
    return encoding_loss(outs, targets);
  };
  EXPECT_LT(test::check_gradients(test::vars_of(model.parameters()), loss, 20, rng).max_rel_error,
            1e-4);
}

TEST(Pretrain, ReducesLossAndLogsEveryStep) {
  Rng rng(7);
  const auto examples = toy_examples(8, rng, 4);
  VisualBase model(test::tiny_visual_config(), 13);
  const auto log = pretrain(model, examples, quick_config(40));
  ASSERT_EQ(log.records.size(), 40u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 5; ++i) {
    first += log.records[i].loss_enc;
    last += log.records[35 + i].loss_enc;
  }
  EXPECT_LT(last, 0.5 * first);
  EXPECT_EQ(log.records[4].lr, 3e-3);
  for (const auto& r : log.records) {
    EXPECT_EQ(r.loss_total, r.loss_enc);
    EXPECT_GT(r.grad_norm, 0.0);
  }
}

TEST(Pretrain, ResumeReproducesUninterruptedRun) {
  test::TempDir dir;
  Rng rng(8);
  const auto examples = toy_examples(6, rng, 4);
  auto cfg = quick_config(10);
  cfg.checkpoint_every = 5;
  cfg.out_dir = dir.path();
  VisualBase full(test::tiny_visual_config(), 14);
  const auto full_log = pretrain(full, examples, cfg);
  ASSERT_EQ(full_log.checkpoints.size(), 2u);
  const auto full_sum = nn::parameter_checksum(full.parameters());

  const auto state = TrainingState::load(dir / "pretrain_step5.json");
  EXPECT_EQ(state.step, 5);
  VisualBase resumed(test::tiny_visual_config(), 99);
  const auto resumed_log = pretrain(resumed, examples, cfg, &state);
  ASSERT_EQ(resumed_log.records.size(), 5u);
  EXPECT_EQ(resumed_log.records[0].step, 6);
  EXPECT_EQ(resumed_log.records[4].loss_enc, full_log.records[9].loss_enc);
  EXPECT_EQ(nn::parameter_checksum(resumed.parameters()), full_sum);

  std::ifstream metrics(dir / "metrics.csv");
  std::string line;
  int rows = 0;
  std::getline(metrics, line);
  EXPECT_EQ(line, "step,lr,loss_enc,loss_ctc,loss_total");
  while (std::getline(metrics, line)) ++rows;
  EXPECT_EQ(rows, 10);
}

TEST(Pretrain, ExampleWithoutTargetIsRejected) {
  Rng rng(9);
  auto examples = toy_examples(2, rng, 4);
  examples[1].target.reset();
  VisualBase model(test::tiny_visual_config(), 1);
  EXPECT_THROW(pretrain(model, examples, quick_config(2)), DataError);
}

struct FinetuneFixture {
  std::shared_ptr<AcousticModel> model;
  AcousticSplit split;
  NormalizationStats stats;
};

FinetuneFixture finetune_fixture() {
  AcousticModelConfig cfg;
  cfg.input_dim = 6;
  cfg.num_conformer_layers = 2;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ff_mult = 1;
  cfg.conv_kernel = 3;
  cfg.vocab_size = 4;
  auto model = build_acoustic_model(cfg, 21);
  NormalizationStats stats;
  stats.mu = Vector::LinSpaced(8, -1.0, 1.0);
  stats.sigma = Vector::LinSpaced(8, 0.5, 2.0);
  stats.frame_count = 100;
  return {model, split_model(model, 1), stats};
}

TEST(Finetune, FrozenHeadKeepsChecksumAndCtcOnlyTotal) {
  Rng rng(10);
  const auto examples = toy_examples(6, rng, 4);
  auto fx = finetune_fixture();
  const auto head_sum = nn::parameter_checksum(fx.split.head.parameters());
  VisualBase visual(test::tiny_visual_config(), 15);
  const auto before = nn::parameter_checksum(visual.parameters());
  const auto log = finetune(visual, fx.split, fx.stats, examples, quick_config(6));
  EXPECT_EQ(nn::parameter_checksum(fx.split.head.parameters()), head_sum);
  EXPECT_NE(nn::parameter_checksum(visual.parameters()), before);
  for (const auto& r : log.records) EXPECT_EQ(r.loss_total, r.loss_ctc);
  for (const auto& p : fx.split.head.parameters()) EXPECT_TRUE(p.var.requires_grad());
}

TEST(Finetune, TrainedHeadChangesAndEncodingTermIsLogged) {
  Rng rng(11);
  const auto examples = toy_examples(6, rng, 4);
  auto fx = finetune_fixture();
  const auto head_sum = nn::parameter_checksum(fx.split.head.parameters());
  VisualBase visual(test::tiny_visual_config(), 16);
  auto cfg = quick_config(4);
  cfg.loss.train_head = true;
  cfg.loss.enc_weight = 0.5;
  const auto log = finetune(visual, fx.split, fx.stats, examples, cfg);
  EXPECT_NE(nn::parameter_checksum(fx.split.head.parameters()), head_sum);
  for (const auto& r : log.records) {
    EXPECT_GT(r.loss_enc, 0.0);
    EXPECT_NEAR(r.loss_total, r.loss_ctc + 0.5 * r.loss_enc, 1e-9);
  }
}

TEST(Finetune, UnlabeledExampleIsRejected) {
  Rng rng(12);
  auto examples = toy_examples(3, rng, 4);
  examples[2].labeled = false;
  auto fx = finetune_fixture();
  VisualBase visual(test::tiny_visual_config(), 17);
  EXPECT_THROW(finetune(visual, fx.split, fx.stats, examples, quick_config(2)), DataError);
}

TEST(TrainingState, JsonRoundTripWithRelativePaths) {
  test::TempDir dir;
  TrainingState s;
  s.phase = "finetune";
  s.step = 42;
  s.seed = 7;
  s.visual = dir / "v.lvw";
  s.optimizer = dir / "o.lvw";
  s.head = dir / "h.lvw";
  s.save(dir / "state.json");
  const auto back = TrainingState::load(dir / "state.json");
  EXPECT_EQ(back.phase, "finetune");
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.visual, s.visual);
  EXPECT_EQ(*back.head, *s.head);
}

}  // namespace
}  // namespace litevsr
