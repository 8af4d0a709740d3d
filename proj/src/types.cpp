#include "litevsr/types.hpp"

#include <algorithm>
#include <string>

#include <fmt/format.h>

#include "litevsr/errors.hpp"

namespace litevsr {

BatchedFeatures::BatchedFeatures(int batch, int max_frames, int dim)
    : batch_(batch),
      max_frames_(max_frames),
      dim_(dim),
      lengths_(batch, 0),
      data_(static_cast<size_t>(batch) * max_frames * dim, 0.0) {}

Matrix BatchedFeatures::sample(int n) const {
  Matrix m(max_frames_, dim_);
  std::copy_n(frame(n, 0), static_cast<size_t>(max_frames_) * dim_, m.data());
  return m;
}

Matrix BatchedFeatures::valid_sample(int n) const {
  Matrix m(lengths_[n], dim_);
  std::copy_n(frame(n, 0), static_cast<size_t>(lengths_[n]) * dim_, m.data());
  return m;
}

FeatureSequence BatchedFeatures::sequence(int n) const {
  return FeatureSequence(valid_sample(n));
}

void TokenSequence::validate() const {
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab_size) {
      throw DataError(fmt::format("token id {} at position {} outside [0, {})",
                                  ids[i], i, vocab_size));
    }
  }
}

namespace {

template <typename Get>
BatchedFeatures pad_impl(size_t count, Get get) {
  if (count == 0) throw DataError("pad_batch: empty batch");
  const int dim = static_cast<int>(get(0).cols());
  int max_frames = 0;
  for (size_t i = 0; i < count; ++i) {
    if (get(i).cols() != dim) {
      throw DimensionError(fmt::format("pad_batch: sequence {} has dim {}, expected {}",
                                       i, get(i).cols(), dim));
    }
  }
  std::vector<int> lengths(count);
  for (size_t i = 0; i < count; ++i) {
    lengths[i] = static_cast<int>(get(i).rows());
    max_frames = std::max(max_frames, lengths[i]);
  }
  BatchedFeatures batch(static_cast<int>(count), max_frames, dim);
  for (size_t i = 0; i < count; ++i) {
    batch.lengths()[i] = lengths[i];
    const auto& m = get(i);
    for (int t = 0; t < lengths[i]; ++t) {
      for (int j = 0; j < dim; ++j) batch.at(static_cast<int>(i), t, j) = m(t, j);
    }
  }
  return batch;
}

}  // namespace

BatchedFeatures pad_batch(std::span<const FeatureSequence> seqs) {
  std::vector<Matrix> valid;
  valid.reserve(seqs.size());
  for (const auto& s : seqs) {
    if (s.valid_length < 0 || s.valid_length > s.frames()) {
      throw DataError("pad_batch: valid_length outside [0, T]");
    }
    valid.emplace_back(s.valid());
  }
  return pad_batch(std::span<const Matrix>(valid));
}

BatchedFeatures pad_batch(std::span<const Matrix> seqs) {
  return pad_impl(seqs.size(),
                  [&](size_t i) -> const Matrix& { return seqs[i]; });
}

std::vector<FeatureSequence> unpad_batch(const BatchedFeatures& batch) {
  std::vector<FeatureSequence> out;
  out.reserve(batch.batch());
  for (int n = 0; n < batch.batch(); ++n) out.push_back(batch.sequence(n));
  return out;
}

Vector masked_sum(const BatchedFeatures& batch) {
  Vector sum = Vector::Zero(batch.dim());
  for (int n = 0; n < batch.batch(); ++n) {
    for (int t = 0; t < batch.lengths()[n]; ++t) {
      const double* row = batch.frame(n, t);
      for (int j = 0; j < batch.dim(); ++j) sum[j] += row[j];
    }
  }
  return sum;
}

int64_t total_valid_frames(const BatchedFeatures& batch) {
  int64_t total = 0;
  for (int len : batch.lengths()) total += len;
  return total;
}

Vector masked_mean(const BatchedFeatures& batch) {
  const int64_t frames = total_valid_frames(batch);
  if (frames == 0) throw DataError("masked_mean: no valid frames");
  return masked_sum(batch) / static_cast<double>(frames);
}

}  // namespace litevsr
