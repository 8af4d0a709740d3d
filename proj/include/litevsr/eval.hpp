#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/feature_norm.hpp"
#include "litevsr/training.hpp"
#include "litevsr/visual_base.hpp"
#include "litevsr/vocab.hpp"

namespace litevsr {

// Per-frame argmax, collapse repeats, drop blanks.
TokenSequence greedy_ctc_decode(const Eigen::Ref<const Matrix>& logits, int blank_id);

// Lowercased whitespace tokens with leading/trailing punctuation stripped;
// tokens that become empty are dropped.
std::vector<std::string> normalize_words(const std::string& text);

// Unit-cost Levenshtein distance.
template <typename T>
int edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<int> prev(hyp.size() + 1);
  std::vector<int> cur(hyp.size() + 1);
  for (size_t j = 0; j <= hyp.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= hyp.size(); ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

// Word error rate; throws DataError for an empty reference.
double wer(std::span<const std::string> ref_words, std::span<const std::string> hyp_words);
double wer(const std::string& ref, const std::string& hyp);
// Character error rate over the normalized words joined by single spaces.
double cer(const std::string& ref, const std::string& hyp);

struct SampleRecord {
  std::string sample_id;
  std::optional<double> enc_loss;  // absent when the sample has no audio
  double ctc_loss = 0.0;           // divided by the number of logit frames
  double ctc_loss_raw = 0.0;
  double wer = 0.0;
  double cer = 0.0;
  std::string ref_text;
  std::string hyp_text;
};

// Produces visual-base features [T, d] (normalized space) for an example.
using VisualEncoder = std::function<Matrix(const TrainingExample&)>;

VisualEncoder visual_encoder(const VisualBase& model);

// Encoding loss against the example's teacher target, and decoding of
// H_a(denormalize(B_v(x))) for CTC loss and error rates. Records follow the
// example order.
std::vector<SampleRecord> evaluate(std::span<const TrainingExample> examples,
                                   const VisualEncoder& encoder, const AudioHead& head,
                                   const NormalizationStats& stats, const Vocabulary& vocab);

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = 0.0;  // 0 when ys are constant
  int n = 0;
};

// Least squares y = slope * x + intercept. Throws DataError for n < 2 or
// constant xs.
RegressionResult linear_regression(std::span<const double> xs, std::span<const double> ys);

struct CorrelationReport {
  RegressionResult enc_ctc;
  RegressionResult enc_wer;
};

// Uses the records that carry an encoding loss.
CorrelationReport correlation_report(std::span<const SampleRecord> records);

// Columns: sample_id, enc_loss, ctc_loss, wer.
void write_scatter_csv(const std::filesystem::path& path, std::span<const SampleRecord> records);
// {"pairs": {"enc_ctc": {slope, intercept, r, n}, "enc_wer": {...}}}
void write_correlation_json(const std::filesystem::path& path, const CorrelationReport& report);
// Full per-sample table including texts.
void write_records_csv(const std::filesystem::path& path, std::span<const SampleRecord> records);
std::vector<SampleRecord> read_records_csv(const std::filesystem::path& path);

double mean_wer(std::span<const SampleRecord> records);

}  // namespace litevsr
