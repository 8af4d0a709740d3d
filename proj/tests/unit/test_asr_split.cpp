#include <gtest/gtest.h>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/nn/ops.hpp"
#include "litevsr/nn/weights.hpp"
#include "test_util.hpp"

namespace litevsr {
namespace {

AcousticModelConfig small_config(int layers, int subsampling = 1) {
  AcousticModelConfig cfg;
  cfg.input_dim = 6;
  cfg.num_conformer_layers = layers;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ff_mult = 2;
  cfg.conv_kernel = 3;
  cfg.vocab_size = 5;
  cfg.subsampling_factor = subsampling;
  cfg.split_layer = 0;
  return cfg;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  EXPECT_EQ(a.rows(), b.rows());
  EXPECT_EQ(a.cols(), b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

class SplitComposition : public ::testing::TestWithParam<int> {};

TEST_P(SplitComposition, HeadOfBaseEqualsFullModelForEverySplit) {
  const int layers = GetParam();
  auto model = build_acoustic_model(small_config(layers), 100 + layers);
  Rng rng(layers);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = nn::from_matrix(test::random_matrix(9 + trial, 6, rng));
    const Matrix full = nn::to_matrix(model->forward(x));
    for (int k = 0; k <= layers; ++k) {
      const auto split = split_model(model, k);
      const Matrix composed = nn::to_matrix(split.head.forward(split.base.forward(x)));
      EXPECT_LT(max_abs_diff(composed, full), 1e-5) << "L=" << layers << " k=" << k;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Depths, SplitComposition, ::testing::Values(2, 4, 8));

TEST(AsrSplit, CompositionHoldsWithSplitGain) {
  auto model = build_acoustic_model(small_config(4), 7);
  Rng rng(8);
  const auto x = nn::from_matrix(test::random_matrix(10, 6, rng));
  const Matrix full = nn::to_matrix(model->forward(x));
  const auto plain = nn::to_matrix(split_model(model, 2).base.forward(x));
  std::vector<double> gain{0.05, 0.3, 1.0, 2.0, 8.0, 30.0, 0.5, 4.0};
  model->set_split_gain(gain);
  const auto split = split_model(model, 2);
  const Matrix scaled = nn::to_matrix(split.base.forward(x));
  for (int j = 0; j < 8; ++j) {
    EXPECT_NEAR(scaled(3, j), plain(3, j) * gain[j], 1e-12);
  }
  EXPECT_LT(max_abs_diff(nn::to_matrix(split.head.forward(split.base.forward(x))), full), 1e-5);
  EXPECT_LT(max_abs_diff(nn::to_matrix(model->forward(x)), full), 1e-5);
}

TEST(AsrSplit, SplitOutsideRangeIsConfigError) {
  auto model = build_acoustic_model(small_config(4), 1);
  EXPECT_THROW(split_model(model, -1), ConfigError);
  EXPECT_THROW(split_model(model, 5), ConfigError);
  auto cfg = small_config(4);
  cfg.split_layer = 6;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AsrSplit, SubsamplingShortensOutput) {
  auto cfg = small_config(2, 4);
  auto model = build_acoustic_model(cfg, 3);
  Rng rng(4);
  const auto x = nn::from_matrix(test::random_matrix(17, 6, rng));
  const auto split = split_model(model, 1);
  const auto h = split.base.forward(x);
  EXPECT_EQ(h.dim(0), cfg.output_length(17));
  EXPECT_EQ(h.dim(1), 8);
  EXPECT_EQ(nn::to_matrix(split.head.forward(h)).cols(), 6);
}

TEST(AsrSplit, BatchedForwardMatchesSingles) {
  auto model = build_acoustic_model(small_config(4), 5);
  const auto split = split_model(model, 2);
  Rng rng(6);
  std::vector<Matrix> seqs;
  for (int len : {4, 11, 7}) seqs.push_back(test::random_matrix(len, 6, rng));
  const auto batch = pad_batch(std::span<const Matrix>(seqs));
  const auto out = audio_base_forward(split.base, batch);
  const auto logits = audio_head_forward(split.head, out);
  for (int n = 0; n < 3; ++n) {
    const std::vector<Matrix> single{seqs[n]};
    const auto alone = audio_base_forward(split.base, pad_batch(std::span<const Matrix>(single)));
    EXPECT_EQ(out.valid_sample(n), alone.valid_sample(0));
    EXPECT_EQ(out.lengths()[n], seqs[n].rows());
    EXPECT_LT(max_abs_diff(logits.valid_sample(n),
                           nn::to_matrix(model->forward(nn::from_matrix(seqs[n])))),
              1e-5);
    for (int t = out.lengths()[n]; t < out.max_frames(); ++t) {
      for (int j = 0; j < out.dim(); ++j) EXPECT_EQ(out.at(n, t, j), 0.0);
    }
  }
}

TEST(AsrSplit, WrongInputWidthIsDimensionError) {
  auto model = build_acoustic_model(small_config(2), 5);
  const auto split = split_model(model, 1);
  Rng rng(1);
  const std::vector<Matrix> seqs{test::random_matrix(5, 7, rng)};
  EXPECT_THROW(audio_base_forward(split.base, pad_batch(std::span<const Matrix>(seqs))),
               DimensionError);
  EXPECT_THROW(split.head.forward(nn::from_matrix(test::random_matrix(5, 3, rng))),
               DimensionError);
}

TEST(AsrSplit, BaseAndHeadParametersPartitionTheModel) {
  auto model = build_acoustic_model(small_config(4), 5);
  const auto split = split_model(model, 3);
  EXPECT_EQ(nn::parameter_count(split.base.parameters()) +
                nn::parameter_count(split.head.parameters()),
            nn::parameter_count(model->parameters()));
}

TEST(AsrSplit, SaveLoadRoundTrip) {
  test::TempDir dir;
  auto model = build_acoustic_model(small_config(2), 9);
  model->set_split_gain(std::vector<double>(8, 2.0));
  model->save(dir / "m.lvw");
  const auto back = AcousticModel::load(dir / "m.lvw");
  EXPECT_EQ(nn::parameter_checksum(back->parameters()), nn::parameter_checksum(model->parameters()));
  EXPECT_EQ(back->split_gain(), model->split_gain());
  Rng rng(2);
  const auto x = nn::from_matrix(test::random_matrix(6, 6, rng));
  EXPECT_EQ(nn::to_matrix(back->forward(x)), nn::to_matrix(model->forward(x)));
}

}  // namespace
}  // namespace litevsr
