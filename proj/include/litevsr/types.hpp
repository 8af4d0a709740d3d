#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace litevsr {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Time-major feature matrix [T, d]. Rows at index >= valid_length are padding.
struct FeatureSequence {
  Matrix values;
  int valid_length = 0;

  FeatureSequence() = default;
  explicit FeatureSequence(Matrix v)
      : values(std::move(v)), valid_length(static_cast<int>(values.rows())) {}
  FeatureSequence(Matrix v, int length) : values(std::move(v)), valid_length(length) {}

  int frames() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }

  // The unpadded prefix.
  auto valid() const { return values.topRows(valid_length); }
};

// Right-padded batch [N, T_max, d]; padding rows are zero.
class BatchedFeatures {
 public:
  BatchedFeatures() = default;
  BatchedFeatures(int batch, int max_frames, int dim);

  int batch() const { return batch_; }
  int max_frames() const { return max_frames_; }
  int dim() const { return dim_; }
  const std::vector<int>& lengths() const { return lengths_; }
  std::vector<int>& lengths() { return lengths_; }

  double* frame(int n, int t) {
    return data_.data() + (static_cast<size_t>(n) * max_frames_ + t) * dim_;
  }
  const double* frame(int n, int t) const {
    return data_.data() + (static_cast<size_t>(n) * max_frames_ + t) * dim_;
  }
  double& at(int n, int t, int j) { return frame(n, t)[j]; }
  double at(int n, int t, int j) const { return frame(n, t)[j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // Full [T_max, d] block of one sample, padding included.
  Matrix sample(int n) const;
  // Valid rows of one sample.
  Matrix valid_sample(int n) const;
  FeatureSequence sequence(int n) const;

 private:
  int batch_ = 0;
  int max_frames_ = 0;
  int dim_ = 0;
  std::vector<int> lengths_;
  std::vector<double> data_;
};

// Token ids in [0, vocab_size); the CTC blank is never a member.
struct TokenSequence {
  std::vector<int> ids;
  int vocab_size = 0;

  void validate() const;
};

// Pads sequences to a common length. Throws on an empty list or mixed dims.
BatchedFeatures pad_batch(std::span<const FeatureSequence> seqs);
BatchedFeatures pad_batch(std::span<const Matrix> seqs);

// Inverse of pad_batch: each row sliced to its valid length.
std::vector<FeatureSequence> unpad_batch(const BatchedFeatures& batch);

// Per-feature sum and mean over valid frames only.
Vector masked_sum(const BatchedFeatures& batch);
Vector masked_mean(const BatchedFeatures& batch);
int64_t total_valid_frames(const BatchedFeatures& batch);

}  // namespace litevsr
