#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/media.hpp"
#include "litevsr/types.hpp"
#include "litevsr/vocab.hpp"

namespace litevsr {

// Latent alphabet: num_symbols - 2 letters starting at 'a', then space, then
// silence. Silence is rendered and heard but never transcribed.
struct SynthConfig {
  int num_symbols = 28;
  int frames_per_symbol = 5;
  int image_size = 64;
  int crop_size = 32;
  int audio_dim = 16;
  double noise_level = 0.1;   // std of additive audio-feature noise
  double pixel_noise = 6.0;   // std in grey levels
  double illumination_jitter = 0.25;  // per-video brightness gain in 1 +- this
  double aspect_jitter = 0.03;        // per-frame std of the mouth aspect
  int min_symbols = 4;
  int max_symbols = 8;
  double fps = 25.0;
  uint64_t seed = 0;

  void validate() const;
  int space_symbol() const { return num_symbols - 2; }
  int silence_symbol() const { return num_symbols - 1; }
};

struct SynthSample {
  std::string sample_id;
  std::vector<int> symbols;
  RawVideo video;
  LandmarkTrack landmarks;
  Matrix audio;  // [T, audio_dim]
  std::string transcript;
};

// Transcript text of a latent sequence (silence dropped).
std::string symbols_to_text(const std::vector<int>& symbols, const SynthConfig& cfg);

// Random latent sequence of `length` symbols with at least one letter, no
// immediate repeats, and spaces only between letters.
std::vector<int> gen_symbol_sequence(const SynthConfig& cfg, int length, uint64_t seed);

// Fixed per-symbol audio embeddings [num_symbols, audio_dim] drawn from cfg.seed.
Matrix symbol_embeddings(const SynthConfig& cfg);

// Audio front-end features for a latent sequence: embedding rows plus noise.
Matrix render_audio(const SynthConfig& cfg, const std::vector<int>& symbols, uint64_t seed);

// Mouth shape of a symbol: height/width aspect and interior grey level.
struct MouthShape {
  double aspect = 0.5;
  double interior = 40.0;
};
MouthShape symbol_shape(const SynthConfig& cfg, int symbol);

SynthSample gen_sample(const SynthConfig& cfg, int length_symbols, uint64_t seed,
                       std::string sample_id = "synth");

struct CorpusPaths {
  std::filesystem::path pretrain;
  std::filesystem::path finetune;
  std::filesystem::path test;
  std::array<int, 3> counts{};
};

// Writes n samples (.lvv video, .lmk landmarks, .lvf audio features) under
// out_dir/media and three manifests: pretrain (unlabeled), finetune and test
// (labeled).
CorpusPaths gen_corpus(const SynthConfig& cfg, int n_samples, std::array<double, 3> split_ratios,
                       const std::filesystem::path& out_dir);

struct TeacherConfig {
  AcousticModelConfig model;  // input_dim and vocab_size are overridden
  int num_samples = 600;
  int steps = 1500;
  int batch_size = 8;
  double peak_lr = 2e-3;
  int warmup_steps = 150;
  uint64_t seed = 1;
};

// Trains the toy acoustic model with CTC on audio-only synthetic samples
// (drawn from a separate seed stream) using the character vocabulary.
std::shared_ptr<AcousticModel> train_teacher(const SynthConfig& cfg, const TeacherConfig& tcfg);

// Mean WER of greedy audio-only decoding over freshly drawn samples.
double teacher_wer(const AcousticModel& model, const SynthConfig& cfg, int num_samples,
                   uint64_t seed);

// Per-feature gains log-spaced between lo and hi in a seeded random order.
std::vector<double> log_spaced_gains(int dim, double lo, double hi, uint64_t seed);

}  // namespace litevsr
