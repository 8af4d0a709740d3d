#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "litevsr/errors.hpp"
#include "litevsr/feature_norm.hpp"
#include "test_util.hpp"

namespace litevsr {
namespace {

// Independent two-pass population statistics over all valid frames.
std::pair<Vector, Vector> two_pass(const std::vector<FeatureSequence>& seqs) {
  const int d = static_cast<int>(seqs[0].dim());
  Vector mean = Vector::Zero(d);
  long n = 0;
  for (const auto& s : seqs) {
    for (int t = 0; t < s.valid_length; ++t) mean += s.values.row(t).transpose();
    n += s.valid_length;
  }
  mean /= static_cast<double>(n);
  Vector var = Vector::Zero(d);
  for (const auto& s : seqs) {
    for (int t = 0; t < s.valid_length; ++t) {
      var += (s.values.row(t).transpose() - mean).array().square().matrix();
    }
  }
  return {mean, (var / static_cast<double>(n)).array().sqrt().matrix()};
}

std::vector<FeatureSequence> random_sequences(Rng& rng, int d, double offset, double scale) {
  std::vector<FeatureSequence> seqs;
  for (int len : {13, 1, 40, 7, 22}) {
    Matrix m = test::random_matrix(len, d, rng, scale);
    m.array() += offset;
    // Padding rows carry junk that must be ignored.
    seqs.emplace_back(m, std::max(1, len - 2));
  }
  return seqs;
}

TEST(FeatureNorm, MatchesTwoPassOracle) {
  Rng rng(1);
  const auto seqs = random_sequences(rng, 5, 3.0, 2.0);
  const auto stats = compute_stats(seqs);
  const auto [mean, std] = two_pass(seqs);
  EXPECT_EQ(stats.frame_count, 11 + 1 + 38 + 5 + 20);
  for (int j = 0; j < 5; ++j) {
    EXPECT_LT(test::relative_error(stats.mu[j], mean[j]), 1e-12);
    EXPECT_LT(test::relative_error(stats.sigma[j], std[j]), 1e-10);
  }
}

TEST(FeatureNorm, StableWithLargeMeans) {
  Rng rng(2);
  const auto seqs = random_sequences(rng, 3, 1e8, 1.0);
  const auto stats = compute_stats(seqs);
  const auto [mean, std] = two_pass(seqs);
  for (int j = 0; j < 3; ++j) EXPECT_LT(test::relative_error(stats.sigma[j], std[j]), 1e-6);
}

TEST(FeatureNorm, OrderAndChunkingDoNotMatter) {
  Rng rng(3);
  auto seqs = random_sequences(rng, 4, 0.5, 1.5);
  const auto a = compute_stats(seqs);
  std::reverse(seqs.begin(), seqs.end());
  StatsAccumulator acc(4);
  for (const auto& s : seqs) acc.add(s);
  const auto b = acc.finalize();
  EXPECT_LT((a.mu - b.mu).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.sigma - b.sigma).cwiseAbs().maxCoeff(), 1e-12);
  StatsAccumulator batched(4);
  batched.add(pad_batch(seqs));
  EXPECT_LT((batched.finalize().sigma - a.sigma).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FeatureNorm, SelfNormalizedDataIsStandard) {
  Rng rng(4);
  const auto seqs = random_sequences(rng, 6, -2.0, 5.0);
  const auto stats = compute_stats(seqs);
  const auto normalized = normalize(pad_batch(seqs), stats);
  std::vector<FeatureSequence> back = unpad_batch(normalized);
  const auto [mean, std] = two_pass(back);
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR(mean[j], 0.0, 1e-6);
    EXPECT_NEAR(std[j], 1.0, 1e-6);
  }
}

TEST(FeatureNorm, RoundTripAndPaddingStaysZero) {
  Rng rng(5);
  const auto seqs = random_sequences(rng, 4, 1.0, 3.0);
  const auto stats = compute_stats(seqs);
  const auto batch = pad_batch(seqs);
  const auto normalized = normalize(batch, stats);
  const auto restored = denormalize(normalized, stats);
  for (int n = 0; n < batch.batch(); ++n) {
    EXPECT_LT((restored.valid_sample(n) - batch.valid_sample(n)).cwiseAbs().maxCoeff(), 1e-9);
    for (int t = batch.lengths()[n]; t < batch.max_frames(); ++t) {
      for (int j = 0; j < 4; ++j) EXPECT_EQ(normalized.at(n, t, j), 0.0);
    }
  }
}

TEST(FeatureNorm, ConstantFeatureIsClampedAndFinite) {
  Matrix m(6, 2);
  m << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
  const std::vector<FeatureSequence> seqs{FeatureSequence(m)};
  const auto stats = compute_stats(seqs);
  EXPECT_EQ(stats.sigma[1], kDefaultSigmaFloor);
  EXPECT_EQ(stats.clamped(), (std::vector<bool>{false, true}));
  const Matrix z = normalize(m, stats);
  EXPECT_TRUE(z.allFinite());
  EXPECT_EQ(z(0, 1), 0.0);
}

TEST(FeatureNorm, IdentityStatsAreNoOp) {
  Rng rng(6);
  const Matrix m = test::random_matrix(4, 3, rng);
  EXPECT_EQ(normalize(m, NormalizationStats::identity(3)), m);
  EXPECT_EQ(denormalize(m, NormalizationStats::identity(3)), m);
}

TEST(FeatureNorm, SaveLoadAndValidation) {
  test::TempDir dir;
  Rng rng(7);
  const auto stats = compute_stats(random_sequences(rng, 3, 0.0, 1.0));
  stats.save(dir / "s.json");
  const auto back = NormalizationStats::load(dir / "s.json");
  EXPECT_EQ(back.mu, stats.mu);
  EXPECT_EQ(back.sigma, stats.sigma);
  EXPECT_EQ(back.frame_count, stats.frame_count);

  auto bad = stats;
  bad.sigma[0] = 0.0;
  EXPECT_THROW(bad.validate(), DataError);
  bad = stats;
  bad.mu[1] = std::nan("");
  EXPECT_THROW(bad.validate(), NumericError);
  EXPECT_THROW(normalize(Matrix::Zero(2, 4), stats), DimensionError);
  EXPECT_THROW(compute_stats(std::span<const FeatureSequence>()), DataError);
}

TEST(FeatureNorm, ReportFindsLargestVarianceAndBimodalFeature) {
  Rng rng(8);
  Matrix m(400, 3);
  for (int t = 0; t < 400; ++t) {
    m(t, 0) = rng.normal();
    m(t, 1) = 10.0 * rng.normal();
    m(t, 2) = (t % 2 ? 5.0 : -5.0) + 0.3 * rng.normal();
  }
  const std::vector<FeatureSequence> seqs{FeatureSequence(m)};
  const auto stats = compute_stats(seqs);
  const auto report = feature_report(stats, seqs, 20);
  ASSERT_EQ(report.features.size(), 3u);
  EXPECT_EQ(report.largest_variance_feature, 1);
  EXPECT_EQ(report.multimodal_features, (std::vector<int>{2}));
  for (const auto& f : report.features) {
    EXPECT_EQ(f.bin_edges.size(), 21u);
    int64_t total = 0;
    for (auto c : f.counts) total += c;
    EXPECT_EQ(total, 400);
  }
  test::TempDir dir;
  write_feature_report(report, dir / "summary.csv", dir / "hist.csv");
  std::ifstream in(dir / "summary.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("feature_index,mean,std", 0), 0u);
}

}  // namespace
}  // namespace litevsr
