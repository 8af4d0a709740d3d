#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "litevsr/types.hpp"

namespace litevsr {

inline constexpr double kDefaultSigmaFloor = 1e-6;

// Per-feature mean and population standard deviation of audio-base outputs.
struct NormalizationStats {
  Vector mu;
  Vector sigma;
  int64_t frame_count = 0;
  double sigma_floor = kDefaultSigmaFloor;

  int dim() const { return static_cast<int>(mu.size()); }
  void validate() const;
  // True where sigma sits on the floor (near-constant features).
  std::vector<bool> clamped() const;

  // mu = 0, sigma = 1: normalize and denormalize become the identity.
  static NormalizationStats identity(int dim);

  // JSON: {dim, frame_count, sigma_floor, mu: [...], sigma: [...]}
  void save(const std::filesystem::path& path) const;
  static NormalizationStats load(const std::filesystem::path& path);
};

// Single-pass streaming accumulator. Each sequence's valid frames are reduced
// locally, then merged with the pairwise update of Chan et al., which keeps
// the second moment accurate when means are large relative to the spread.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(int dim);

  void add(const FeatureSequence& seq);
  void add_frames(const Eigen::Ref<const Matrix>& frames);
  void add(const BatchedFeatures& batch);

  int64_t frame_count() const { return count_; }
  NormalizationStats finalize(double sigma_floor = kDefaultSigmaFloor) const;

 private:
  int dim_;
  int64_t count_ = 0;
  Vector mean_;
  Vector m2_;
};

NormalizationStats compute_stats(std::span<const FeatureSequence> sequences,
                                 double sigma_floor = kDefaultSigmaFloor);

// (f - mu) / sigma per feature; padding rows stay zero.
BatchedFeatures normalize(const BatchedFeatures& f, const NormalizationStats& stats);
// f * sigma + mu per feature; padding rows stay zero.
BatchedFeatures denormalize(const BatchedFeatures& f, const NormalizationStats& stats);
Matrix normalize(const Matrix& f, const NormalizationStats& stats);
Matrix denormalize(const Matrix& f, const NormalizationStats& stats);

struct FeatureSummary {
  int index = 0;
  double mean = 0.0;
  double std = 0.0;
  bool clamped = false;
  std::vector<double> bin_edges;  // num_bins + 1
  std::vector<int64_t> counts;    // num_bins
  int occupied_bins = 0;
  // Maximal runs of bins holding at least a quarter of the tallest bin.
  int modes = 0;
};

struct FeatureReport {
  std::vector<FeatureSummary> features;
  int largest_variance_feature = -1;
  std::vector<int> multimodal_features;
};

// Mean/std table plus fixed-bin histograms spanning each feature's observed
// range in the histogram source.
FeatureReport feature_report(const NormalizationStats& stats,
                             std::span<const FeatureSequence> histogram_source, int num_bins);

// CSV (feature_index, mean, std) and (feature_index, bin_left, bin_right, count).
void write_feature_report(const FeatureReport& report, const std::filesystem::path& summary_csv,
                          const std::filesystem::path& histogram_csv);

}  // namespace litevsr
