#include "litevsr/feature_norm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "litevsr/errors.hpp"

namespace litevsr {

using nlohmann::json;

void NormalizationStats::validate() const {
  if (mu.size() == 0 || mu.size() != sigma.size()) {
    throw DataError("normalization stats: mu and sigma must be non-empty and equal length");
  }
  if (frame_count <= 0) throw DataError("normalization stats: frame_count must be positive");
  if (!(sigma_floor > 0.0)) throw DataError("normalization stats: sigma_floor must be positive");
  for (int i = 0; i < dim(); ++i) {
    if (!std::isfinite(mu[i]) || !std::isfinite(sigma[i])) {
      throw NumericError(fmt::format("normalization stats: non-finite value at feature {}", i));
    }
    if (sigma[i] < sigma_floor) {
      throw DataError(fmt::format("normalization stats: sigma[{}] below floor", i));
    }
  }
}

std::vector<bool> NormalizationStats::clamped() const {
  std::vector<bool> out(dim());
  for (int i = 0; i < dim(); ++i) out[i] = sigma[i] <= sigma_floor;
  return out;
}

NormalizationStats NormalizationStats::identity(int dim) {
  NormalizationStats s;
  s.mu = Vector::Zero(dim);
  s.sigma = Vector::Ones(dim);
  s.frame_count = 1;
  return s;
}

void NormalizationStats::save(const std::filesystem::path& path) const {
  validate();
  json j{{"dim", dim()},
         {"frame_count", frame_count},
         {"sigma_floor", sigma_floor},
         {"mu", std::vector<double>(mu.data(), mu.data() + mu.size())},
         {"sigma", std::vector<double>(sigma.data(), sigma.data() + sigma.size())}};
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write stats {}", path.string()));
  out << j.dump(2) << '\n';
}

NormalizationStats NormalizationStats::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open stats {}", path.string()));
  NormalizationStats s;
  try {
    const json j = json::parse(in);
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto sigma = j.at("sigma").get<std::vector<double>>();
    if (static_cast<int>(mu.size()) != j.at("dim").get<int>()) {
      throw DataError("stats file: dim disagrees with mu length");
    }
    s.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    s.sigma = Eigen::Map<const Vector>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    s.frame_count = j.at("frame_count").get<int64_t>();
    s.sigma_floor = j.at("sigma_floor").get<double>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  s.validate();
  return s;
}

StatsAccumulator::StatsAccumulator(int dim)
    : dim_(dim), mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {
  if (dim <= 0) throw DataError("stats accumulator needs a positive dimension");
}

void StatsAccumulator::add_frames(const Eigen::Ref<const Matrix>& frames) {
  if (frames.rows() == 0) return;
  if (frames.cols() != dim_) {
    throw DimensionError(fmt::format("stats: got {} features, expected {}", frames.cols(), dim_));
  }
  const auto nb = static_cast<double>(frames.rows());
  const Vector mean_b = frames.colwise().mean().transpose();
  const Vector m2_b = (frames.rowwise() - mean_b.transpose()).colwise().squaredNorm().transpose();
  if (count_ == 0) {
    mean_ = mean_b;
    m2_ = m2_b;
  } else {
    const auto na = static_cast<double>(count_);
    const double n = na + nb;
    const Vector delta = mean_b - mean_;
    mean_ += delta * (nb / n);
    m2_ += m2_b + delta.cwiseProduct(delta) * (na * nb / n);
  }
  count_ += frames.rows();
}

void StatsAccumulator::add(const FeatureSequence& seq) {
  if (seq.valid_length < 0 || seq.valid_length > seq.frames()) {
    throw DataError("stats: valid_length outside [0, T]");
  }
  add_frames(seq.valid());
}

void StatsAccumulator::add(const BatchedFeatures& batch) {
  for (int n = 0; n < batch.batch(); ++n) {
    Eigen::Map<const Matrix> rows(batch.frame(n, 0), batch.lengths()[n], batch.dim());
    add_frames(rows);
  }
}

NormalizationStats StatsAccumulator::finalize(double sigma_floor) const {
  if (count_ == 0) throw DataError("compute_stats: no valid frames");
  NormalizationStats s;
  s.mu = mean_;
  s.sigma = (m2_ / static_cast<double>(count_)).cwiseSqrt().cwiseMax(sigma_floor);
  s.frame_count = count_;
  s.sigma_floor = sigma_floor;
  return s;
}

NormalizationStats compute_stats(std::span<const FeatureSequence> sequences, double sigma_floor) {
  if (sequences.empty()) throw DataError("compute_stats: no sequences");
  StatsAccumulator acc(sequences.front().dim());
  for (const auto& s : sequences) acc.add(s);
  return acc.finalize(sigma_floor);
}

namespace {

void check_dim(int got, const NormalizationStats& stats) {
  if (got != stats.dim()) {
    throw DimensionError(fmt::format("features have dim {}, stats have dim {}", got, stats.dim()));
  }
}

template <typename Fn>
BatchedFeatures map_valid(const BatchedFeatures& f, const NormalizationStats& stats, Fn fn) {
  check_dim(f.dim(), stats);
  BatchedFeatures out(f.batch(), f.max_frames(), f.dim());
  out.lengths() = f.lengths();
  for (int n = 0; n < f.batch(); ++n) {
    for (int t = 0; t < f.lengths()[n]; ++t) {
      const double* src = f.frame(n, t);
      double* dst = out.frame(n, t);
      for (int j = 0; j < f.dim(); ++j) dst[j] = fn(src[j], j);
    }
  }
  return out;
}

}  // namespace

BatchedFeatures normalize(const BatchedFeatures& f, const NormalizationStats& stats) {
  return map_valid(f, stats,
                   [&](double x, int j) { return (x - stats.mu[j]) / stats.sigma[j]; });
}

BatchedFeatures denormalize(const BatchedFeatures& f, const NormalizationStats& stats) {
  return map_valid(f, stats,
                   [&](double x, int j) { return x * stats.sigma[j] + stats.mu[j]; });
}

Matrix normalize(const Matrix& f, const NormalizationStats& stats) {
  check_dim(static_cast<int>(f.cols()), stats);
  return ((f.rowwise() - stats.mu.transpose()).array().rowwise() /
          stats.sigma.transpose().array())
      .matrix();
}

Matrix denormalize(const Matrix& f, const NormalizationStats& stats) {
  check_dim(static_cast<int>(f.cols()), stats);
  Matrix out = (f.array().rowwise() * stats.sigma.transpose().array()).matrix();
  out.rowwise() += stats.mu.transpose();
  return out;
}

FeatureReport feature_report(const NormalizationStats& stats,
                             std::span<const FeatureSequence> source, int num_bins) {
  if (num_bins <= 0) throw DataError("feature_report: histogram needs at least one bin");
  stats.validate();
  const int d = stats.dim();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (const auto& seq : source) {
    check_dim(seq.dim(), stats);
    for (int t = 0; t < seq.valid_length; ++t) {
      for (int j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], seq.values(t, j));
        hi[j] = std::max(hi[j], seq.values(t, j));
      }
    }
  }

  FeatureReport report;
  const auto clamped = stats.clamped();
  for (int j = 0; j < d; ++j) {
    FeatureSummary f;
    f.index = j;
    f.mean = stats.mu[j];
    f.std = stats.sigma[j];
    f.clamped = clamped[j];
    double left = lo[j];
    double right = hi[j];
    if (!std::isfinite(left)) {
      left = stats.mu[j] - 0.5;
      right = stats.mu[j] + 0.5;
    } else if (right <= left) {
      left -= 0.5;
      right += 0.5;
    }
    f.bin_edges.resize(num_bins + 1);
    for (int b = 0; b <= num_bins; ++b) f.bin_edges[b] = left + (right - left) * b / num_bins;
    f.counts.assign(num_bins, 0);
    report.features.push_back(std::move(f));
  }
  for (const auto& seq : source) {
    for (int t = 0; t < seq.valid_length; ++t) {
      for (int j = 0; j < d; ++j) {
        auto& f = report.features[j];
        const double left = f.bin_edges.front();
        const double width = (f.bin_edges.back() - left) / num_bins;
        int b = static_cast<int>((seq.values(t, j) - left) / width);
        f.counts[std::clamp(b, 0, num_bins - 1)] += 1;
      }
    }
  }

  double best_var = -1.0;
  for (auto& f : report.features) {
    const int64_t peak = *std::max_element(f.counts.begin(), f.counts.end());
    bool in_run = false;
    for (int64_t c : f.counts) {
      if (c > 0) ++f.occupied_bins;
      const bool high = peak > 0 && 4 * c >= peak;
      if (high && !in_run) ++f.modes;
      in_run = high;
    }
    if (f.modes >= 2) report.multimodal_features.push_back(f.index);
    if (f.std > best_var) {
      best_var = f.std;
      report.largest_variance_feature = f.index;
    }
  }
  return report;
}

void write_feature_report(const FeatureReport& report, const std::filesystem::path& summary_csv,
                          const std::filesystem::path& histogram_csv) {
  std::ofstream summary(summary_csv);
  std::ofstream hist(histogram_csv);
  if (!summary || !hist) throw DataError("cannot write feature report CSVs");
  summary << "feature_index,mean,std\n";
  hist << "feature_index,bin_left,bin_right,count\n";
  for (const auto& f : report.features) {
    summary << fmt::format("{},{:.17g},{:.17g}\n", f.index, f.mean, f.std);
    for (size_t b = 0; b < f.counts.size(); ++b) {
      hist << fmt::format("{},{:.17g},{:.17g},{}\n", f.index, f.bin_edges[b], f.bin_edges[b + 1],
                          f.counts[b]);
    }
  }
}

}  // namespace litevsr
