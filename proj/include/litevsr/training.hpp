#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/crop.hpp"
#include "litevsr/feature_norm.hpp"
#include "litevsr/manifest.hpp"
#include "litevsr/nn/tensor.hpp"
#include "litevsr/visual_base.hpp"
#include "litevsr/vocab.hpp"

namespace litevsr {

struct ScheduleConfig {
  int64_t warmup_steps = 100;
  double peak_lr = 8e-4;

  void validate() const;
};

// peak_lr * min(step / warmup, sqrt(warmup / step)), step >= 1.
double noam_lr(int64_t step, const ScheduleConfig& sched);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  int batch_size = 8;
  double clip_norm = 1.0;  // <= 0 disables clipping

  void validate() const;
};

struct FinetuneLossConfig {
  double ctc_weight = 1.0;
  double enc_weight = 0.0;
  bool train_head = false;

  void validate() const;
};

// Mean squared difference between normalized audio-base features and visual
// features over the valid frames of every sample. Lengths must already agree.
double encoding_loss(const BatchedFeatures& audio_raw, const BatchedFeatures& visual,
                     const NormalizationStats& stats);

// Differentiable form over visual outputs and normalized targets: squared error
// summed over each pair's common length, divided by the elements compared.
nn::Var encoding_loss(std::span<const nn::Var> visual, std::span<const Matrix> targets);

// One training sample held in memory.
struct TrainingExample {
  std::string sample_id;
  VideoTensor clip;          // cropped, un-augmented
  std::optional<RawVideo> video;  // kept only when augmentation is on
  CropPlan plan;
  std::optional<Matrix> target;   // normalized audio-base features [T, d]
  std::vector<int> tokens;
  std::string transcript;
  bool labeled = false;
};

struct ExampleLoadOptions {
  CropConfig crop;
  bool keep_video = false;       // required for crop augmentation
  bool require_audio = false;
  bool require_labels = false;
};

// Reads, crops and (when an audio base is given) computes normalized teacher
// targets for every manifest entry.
std::vector<TrainingExample> load_examples(std::span<const SampleManifestEntry> entries,
                                           const ExampleLoadOptions& options,
                                           const AudioBase* audio_base,
                                           const NormalizationStats* stats,
                                           const Vocabulary* vocab);

// Streams audio-base outputs of every entry with audio into a stats
// accumulator. Entries without audio are skipped; none at all is an error.
NormalizationStats compute_base_stats(std::span<const SampleManifestEntry> entries,
                                      const AudioBase& base,
                                      double sigma_floor = kDefaultSigmaFloor);

struct TrainConfig {
  ScheduleConfig schedule;
  OptimizerConfig optimizer;
  FinetuneLossConfig loss;  // fine-tuning only
  int64_t steps = 200;
  int64_t checkpoint_every = 0;  // 0: only the final step
  uint64_t seed = 0;
  std::optional<AugmentConfig> augment;  // seed field ignored, drawn per sample
  CropConfig crop;                       // used when augmenting
  std::filesystem::path out_dir;         // empty: nothing written
  std::string metrics_file = "metrics.csv";
};

struct StepRecord {
  int64_t step = 0;
  double lr = 0.0;
  double loss_enc = 0.0;
  double loss_ctc = 0.0;
  double loss_total = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct TrainLog {
  std::vector<StepRecord> records;
  std::vector<std::filesystem::path> checkpoints;  // training-state sidecars
};

struct TrainingState {
  std::string phase;  // "pretrain" or "finetune"
  int64_t step = 0;
  uint64_t seed = 0;
  std::filesystem::path visual;
  std::filesystem::path optimizer;
  std::optional<std::filesystem::path> head;

  void save(const std::filesystem::path& path) const;
  static TrainingState load(const std::filesystem::path& path);
};

// Indices of batch `step` (1-based): consecutive slices of per-epoch
// permutations seeded from (seed, epoch), so any step can be rebuilt without
// replaying earlier ones.
std::vector<int> batch_indices(int64_t step, int batch_size, int num_examples, uint64_t seed);

// Distillation: Adam on the visual base only, minimizing the encoding loss
// against each example's target. resume continues from a training state.
TrainLog pretrain(VisualBase& visual, std::span<const TrainingExample> examples,
                  const TrainConfig& cfg, const TrainingState* resume = nullptr);

// CTC through the de-normalized visual features and the audio head, plus the
// optional encoding term. The head is updated only when cfg.loss.train_head.
TrainLog finetune(VisualBase& visual, const AcousticSplit& split, const NormalizationStats& stats,
                  std::span<const TrainingExample> examples, const TrainConfig& cfg,
                  const TrainingState* resume = nullptr);

void write_metrics_csv(const std::filesystem::path& path, std::span<const StepRecord> records);

}  // namespace litevsr
