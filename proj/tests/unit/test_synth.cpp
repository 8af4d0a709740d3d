#include <cmath>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "litevsr/crop.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/manifest.hpp"
#include "litevsr/synth.hpp"
#include "litevsr/training.hpp"
#include "test_util.hpp"

namespace litevsr {
namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.seed = 5;
  cfg.image_size = 32;
  cfg.min_symbols = 2;
  cfg.max_symbols = 3;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Synth, SampleIsDeterministicAndSized) {
  const auto cfg = small_config();
  const auto a = gen_sample(cfg, 3, 17);
  const auto b = gen_sample(cfg, 3, 17);
  EXPECT_EQ(a.video.frames, 15);
  EXPECT_EQ(a.audio.rows(), 15);
  EXPECT_EQ(a.audio.cols(), cfg.audio_dim);
  EXPECT_EQ(a.landmarks.frames(), 15);
  EXPECT_EQ(a.video.pixels, b.video.pixels);
  EXPECT_EQ(a.audio, b.audio);
  EXPECT_EQ(a.transcript, b.transcript);
  EXPECT_NE(gen_sample(cfg, 3, 18).video.pixels, a.video.pixels);
}

TEST(Synth, NoiselessAudioIsTheEmbeddingTable) {
  auto cfg = small_config();
  cfg.noise_level = 0.0;
  const auto s = gen_sample(cfg, 5, 3);
  const Matrix emb = symbol_embeddings(cfg);
  for (int t = 0; t < s.audio.rows(); ++t) {
    EXPECT_EQ(s.audio.row(t), emb.row(s.symbols[t / cfg.frames_per_symbol]));
  }
}

TEST(Synth, NoisyAudioIsNearestEmbeddingDecodable) {
  const auto cfg = small_config();
  const Matrix emb = symbol_embeddings(cfg);
  int correct = 0, total = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gen_sample(cfg, 6, seed);
    for (int t = 0; t < s.audio.rows(); ++t) {
      Eigen::Index best = 0;
      (emb.rowwise() - s.audio.row(t)).rowwise().squaredNorm().minCoeff(&best);
      correct += best == s.symbols[t / cfg.frames_per_symbol];
      ++total;
    }
  }
  EXPECT_EQ(correct, total);
}

TEST(Synth, SequenceConstraints) {
  const auto cfg = SynthConfig{};
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const auto seq = gen_symbol_sequence(cfg, 2 + static_cast<int>(seed % 9), seed);
    bool letter = false;
    int last_spoken = -1;
    for (size_t i = 0; i < seq.size(); ++i) {
      const int s = seq[i];
      if (s < cfg.space_symbol()) letter = true;
      if (i > 0) {
        EXPECT_NE(s, seq[i - 1]) << seed;
      }
      if (s == cfg.space_symbol()) {
        EXPECT_GE(last_spoken, 0);
        EXPECT_NE(last_spoken, cfg.space_symbol());
        EXPECT_NE(i, seq.size() - 1);
      }
      if (s != cfg.silence_symbol()) last_spoken = s;
    }
    EXPECT_TRUE(letter);
    const auto text = symbols_to_text(seq, cfg);
    EXPECT_FALSE(text.empty());
    EXPECT_NE(text.front(), ' ');
    EXPECT_NE(text.back(), ' ');
    EXPECT_EQ(text.find("  "), std::string::npos);
  }
}

TEST(Synth, LandmarksMatchRenderedMouth) {
  auto cfg = small_config();
  cfg.image_size = 64;
  cfg.pixel_noise = 0.0;
  cfg.illumination_jitter = 0.0;
  const auto s = gen_sample(cfg, 4, 9);
  const auto track = mouth_geometry(s.landmarks);
  for (int f = 0; f < s.video.frames; ++f) {
    EXPECT_GE(track.width[f], 0.22 * 64 - 1e-9);
    EXPECT_LE(track.width[f], 0.34 * 64 + 1e-9);
    const int cx = static_cast<int>(std::lround(track.center[f].x()));
    const int cy = static_cast<int>(std::lround(track.center[f].y()));
    const int far_x = cx + static_cast<int>(track.width[f]);
    // Inside the mouth the red channel is darker than the skin beside it.
    EXPECT_LT(s.video.at(f, cy, cx, 0), s.video.at(f, cy, std::min(63, far_x), 0));
  }
}

TEST(Synth, AspectIsRecoverableFromLandmarks) {
  const auto cfg = small_config();
  int correct = 0, total = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gen_sample(cfg, 5, seed);
    for (int f = 0; f < s.video.frames; ++f) {
      const auto& lm = s.landmarks;
      const double aspect = (lm.point(f, 57).y() - lm.point(f, 51).y()) /
                            (lm.point(f, 54).x() - lm.point(f, 48).x());
      const int level = static_cast<int>(std::lround((aspect - 0.15) / 0.125));
      correct += level == s.symbols[f / cfg.frames_per_symbol] % 7;
      ++total;
    }
  }
  EXPECT_GT(static_cast<double>(correct) / total, 0.9);
}

TEST(Synth, CorpusSplitAndRegeneration) {
  test::TempDir a;
  test::TempDir b_dir;
  const auto b = b_dir.path() / "copy";
  const auto cfg = small_config();
  const auto paths = gen_corpus(cfg, 20, {0.7, 0.2, 0.1}, a.path());
  EXPECT_EQ(paths.counts, (std::array<int, 3>{14, 4, 2}));
  const auto pre = load_manifest(paths.pretrain, {.strict = true, .require_files = true});
  const auto fine = load_manifest(paths.finetune, {.strict = true, .require_files = true});
  ASSERT_EQ(pre.entries.size(), 14u);
  ASSERT_EQ(fine.entries.size(), 4u);
  EXPECT_FALSE(pre.entries[0].labeled());
  EXPECT_TRUE(fine.entries[0].labeled());
  EXPECT_EQ(fine.entries[0].sample_id, "synth_00014");

  gen_corpus(cfg, 20, {0.7, 0.2, 0.1}, b);
  EXPECT_EQ(slurp(a / "media/synth_00007.lvv"), slurp(b / "media/synth_00007.lvv"));
  EXPECT_EQ(slurp(a / "media/synth_00019.lvf"), slurp(b / "media/synth_00019.lvf"));
  EXPECT_THROW(gen_corpus(cfg, 5, {0.5, 0.2, 0.2}, b), ConfigError);
}

TEST(Synth, LogSpacedGains) {
  const auto g = log_spaced_gains(7, 1e-2, 1e1, 3);
  ASSERT_EQ(g.size(), 7u);
  auto sorted = g;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_NEAR(sorted.front(), 1e-2, 1e-15);
  EXPECT_NEAR(sorted.back(), 1e1, 1e-12);
  for (size_t i = 1; i < sorted.size(); ++i) {
    EXPECT_NEAR(std::log10(sorted[i] / sorted[i - 1]), 0.5, 1e-12);
  }
  EXPECT_EQ(g, log_spaced_gains(7, 1e-2, 1e1, 3));
}

TEST(Synth, CorpusLoadsIntoTrainingExamples) {
  test::TempDir dir;
  const auto cfg = small_config();
  const auto paths = gen_corpus(cfg, 6, {0.5, 0.5, 0.0}, dir.path());
  AcousticModelConfig acfg;
  acfg.input_dim = cfg.audio_dim;
  acfg.num_conformer_layers = 2;
  acfg.model_dim = 8;
  acfg.num_heads = 2;
  acfg.ff_mult = 1;
  acfg.vocab_size = 29;
  const auto split = split_model(build_acoustic_model(acfg, 1), 1);
  const auto entries = load_manifest(paths.finetune).entries;
  const auto stats = compute_base_stats(entries, split.base);
  EXPECT_EQ(stats.dim(), 8);
  ExampleLoadOptions opts;
  opts.crop.out_size = 32;
  opts.require_audio = true;
  opts.require_labels = true;
  const auto vocab = Vocabulary::characters();
  const auto examples = load_examples(entries, opts, &split.base, &stats, &vocab);
  ASSERT_EQ(examples.size(), 3u);
  for (const auto& ex : examples) {
    EXPECT_EQ(ex.clip.height, 32);
    EXPECT_EQ(ex.clip.channels, 1);
    ASSERT_TRUE(ex.target.has_value());
    EXPECT_EQ(ex.target->rows(), ex.clip.frames);
    EXPECT_EQ(vocab.decode(ex.tokens), ex.transcript);
    EXPECT_TRUE(ex.labeled);
  }
  const auto unlabeled = load_manifest(paths.pretrain).entries;
  EXPECT_THROW(load_examples(unlabeled, opts, &split.base, &stats, &vocab), DataError);
}

TEST(Synth, ConfigValidation) {
  SynthConfig cfg;
  cfg.num_symbols = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SynthConfig{};
  cfg.min_symbols = 5;
  cfg.max_symbols = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace litevsr
