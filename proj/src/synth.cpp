#include "litevsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "litevsr/ctc.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/eval.hpp"
#include "litevsr/manifest.hpp"
#include "litevsr/nn/adam.hpp"
#include "litevsr/nn/ops.hpp"
#include "litevsr/rng.hpp"
#include "litevsr/training.hpp"

namespace litevsr {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kEmbeddingSalt = 0xe3b0c442ULL;
constexpr uint64_t kCorpusSalt = 0x98fc1c14ULL;
constexpr uint64_t kTeacherSalt = 0x9afbf4c8ULL;
constexpr int kAspectLevels = 7;

}  // namespace

void SynthConfig::validate() const {
  if (num_symbols < 3 || num_symbols > 28) {
    throw ConfigError("num_symbols must lie in [3, 28] (letters + space + silence)");
  }
  if (frames_per_symbol < 1) throw ConfigError("frames_per_symbol must be >= 1");
  if (image_size < 32) throw ConfigError("image_size must be >= 32");
  if (crop_size < 16) throw ConfigError("crop_size must be >= 16");
  if (audio_dim < 1) throw ConfigError("audio_dim must be positive");
  if (noise_level < 0.0 || pixel_noise < 0.0 || aspect_jitter < 0.0) {
    throw ConfigError("noise levels must be >= 0");
  }
  if (illumination_jitter < 0.0 || illumination_jitter >= 1.0) {
    throw ConfigError("illumination_jitter must lie in [0, 1)");
  }
  if (min_symbols < 1 || max_symbols < min_symbols) {
    throw ConfigError("need 1 <= min_symbols <= max_symbols");
  }
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
}

std::string symbols_to_text(const std::vector<int>& symbols, const SynthConfig& cfg) {
  std::string out;
  for (int s : symbols) {
    if (s == cfg.silence_symbol()) continue;
    out += s == cfg.space_symbol() ? ' ' : static_cast<char>('a' + s);
  }
  return out;
}

std::vector<int> gen_symbol_sequence(const SynthConfig& cfg, int length, uint64_t seed) {
  cfg.validate();
  if (length < 1) throw ConfigError("sequence length must be >= 1");
  const int letters = cfg.num_symbols - 2;
  Rng rng(seed);
  std::vector<int> out;
  int prev = -1;
  int last_spoken = -1;  // last non-silence symbol
  bool have_letter = false;
  for (int p = 0; p < length; ++p) {
    const bool last = p == length - 1;
    const bool after_space = last_spoken == cfg.space_symbol();
    const bool silence_ok = prev != cfg.silence_symbol() && !after_space &&
                            !(last && !have_letter);
    const bool space_ok = have_letter && !after_space && !last;
    const double u = rng.uniform();
    int s = 0;
    if (silence_ok && u < 0.1) {
      s = cfg.silence_symbol();
    } else if (space_ok && u < 0.25) {
      s = cfg.space_symbol();
    } else {
      do {
        s = static_cast<int>(rng.index(static_cast<uint64_t>(letters)));
      } while (s == prev && letters > 1);
      have_letter = true;
    }
    if (s != cfg.silence_symbol()) last_spoken = s;
    out.push_back(s);
    prev = s;
  }
  return out;
}

Matrix symbol_embeddings(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, kEmbeddingSalt));
  Matrix e(cfg.num_symbols, cfg.audio_dim);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  return e;
}

Matrix render_audio(const SynthConfig& cfg, const std::vector<int>& symbols, uint64_t seed) {
  const Matrix emb = symbol_embeddings(cfg);
  Rng rng(seed);
  const int frames = static_cast<int>(symbols.size()) * cfg.frames_per_symbol;
  Matrix out(frames, cfg.audio_dim);
  for (int t = 0; t < frames; ++t) {
    out.row(t) = emb.row(symbols[t / cfg.frames_per_symbol]);
    if (cfg.noise_level > 0.0) {
      for (int j = 0; j < cfg.audio_dim; ++j) out(t, j) += rng.normal(0.0, cfg.noise_level);
    }
  }
  return out;
}

MouthShape symbol_shape(const SynthConfig& cfg, int symbol) {
  if (symbol < 0 || symbol >= cfg.num_symbols) throw DataError("symbol out of range");
  const int a = symbol % kAspectLevels;
  const int f = symbol / kAspectLevels;
  return MouthShape{0.15 + 0.125 * a, static_cast<double>(f)};
}

namespace {

struct FrameGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double ax = 0.0;  // horizontal semi-axis
  double ay = 0.0;  // vertical semi-axis
};

void render_frame(RawVideo& video, int f, const FrameGeometry& g, const MouthShape& shape,
                  double gain, double pixel_noise, Rng& rng) {
  constexpr std::array<double, 3> kSkin{200.0, 160.0, 140.0};
  constexpr std::array<double, 3> kLip{170.0, 60.0, 70.0};
  const double lip_scale = 0.55 + 0.15 * shape.interior;
  const double inner = 20.0 + 50.0 * shape.interior;
  const std::array<double, 3> interior{inner, 0.9 * inner, 0.9 * inner};
  const double iax = 0.8 * g.ax;
  const double iay = 0.6 * g.ay;
  constexpr int kSub = 3;
  for (int y = 0; y < video.height; ++y) {
    for (int x = 0; x < video.width; ++x) {
      double outer_cov = 0.0;
      double inner_cov = 0.0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = x + (sx + 0.5) / kSub - 0.5 - g.cx;
          const double py = y + (sy + 0.5) / kSub - 0.5 - g.cy;
          if ((px * px) / (g.ax * g.ax) + (py * py) / (g.ay * g.ay) <= 1.0) outer_cov += 1.0;
          if ((px * px) / (iax * iax) + (py * py) / (iay * iay) <= 1.0) inner_cov += 1.0;
        }
      }
      outer_cov /= kSub * kSub;
      inner_cov /= kSub * kSub;
      for (int c = 0; c < 3; ++c) {
        double v = kSkin[c] * (1.0 - outer_cov) + kLip[c] * lip_scale * (outer_cov - inner_cov) +
                   interior[c] * inner_cov;
        v *= gain;
        if (pixel_noise > 0.0) v += rng.normal(0.0, pixel_noise);
        video.pixels[((static_cast<size_t>(f) * video.height + y) * video.width + x) * 3 + c] =
            static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

// 68 points consistent with the rendered mouth: lip corners at (cx +- ax, cy),
// outer lip midpoints at (cx, cy -+ ay), inner lip on the inner ellipse, and
// the remaining face points at fixed offsets scaled by the mouth width.
void place_landmarks(LandmarkTrack& track, int f, const FrameGeometry& g) {
  auto set = [&](int i, double x, double y) {
    track.points[static_cast<size_t>(f) * kNumLandmarks + i] = Eigen::Vector2d(x, y);
  };
  const double w = 2.0 * g.ax;
  for (int i = 0; i < 17; ++i) {
    const double th = M_PI * i / 16.0;
    set(i, g.cx - 1.6 * w * std::cos(th), g.cy - 1.2 * w + 1.6 * w * std::sin(th));
  }
  for (int i = 0; i < 10; ++i) {
    const double side = i < 5 ? -1.0 : 1.0;
    const int k = i < 5 ? i : i - 5;
    set(17 + i, g.cx + side * (0.3 + 0.2 * k) * w, g.cy - 2.2 * w + 0.05 * k * k * w);
  }
  for (int i = 0; i < 9; ++i) {
    if (i < 4) {
      set(27 + i, g.cx, g.cy - 1.8 * w + 0.25 * i * w);
    } else {
      set(27 + i, g.cx + (i - 6) * 0.15 * w, g.cy - 0.7 * w);
    }
  }
  for (int i = 0; i < 12; ++i) {
    const double side = i < 6 ? -1.0 : 1.0;
    const double th = 2.0 * M_PI * (i % 6) / 6.0;
    set(36 + i, g.cx + side * 0.6 * w + 0.2 * w * std::cos(th),
        g.cy - 1.7 * w + 0.08 * w * std::sin(th));
  }
  for (int k = 0; k < 12; ++k) {
    const double th = M_PI - k * M_PI / 6.0;
    set(48 + k, g.cx + g.ax * std::cos(th), g.cy - g.ay * std::sin(th));
  }
  for (int k = 0; k < 8; ++k) {
    const double th = M_PI - k * M_PI / 4.0;
    set(60 + k, g.cx + 0.8 * g.ax * std::cos(th), g.cy - 0.6 * g.ay * std::sin(th));
  }
}

}  // namespace

SynthSample gen_sample(const SynthConfig& cfg, int length_symbols, uint64_t seed,
                       std::string sample_id) {
  cfg.validate();
  SynthSample s;
  s.sample_id = std::move(sample_id);
  s.symbols = gen_symbol_sequence(cfg, length_symbols, derive_seed(seed, 1));
  s.transcript = symbols_to_text(s.symbols, cfg);
  s.audio = render_audio(cfg, s.symbols, derive_seed(seed, 2));

  const int frames = length_symbols * cfg.frames_per_symbol;
  const int size = cfg.image_size;
  s.video.frames = frames;
  s.video.height = size;
  s.video.width = size;
  s.video.channels = 3;
  s.video.fps = cfg.fps;
  s.video.pixels.resize(static_cast<size_t>(frames) * size * size * 3);
  s.landmarks.frame_rate = cfg.fps;
  s.landmarks.points.resize(static_cast<size_t>(frames) * kNumLandmarks);

  Rng rng(derive_seed(seed, 3));
  const double width = rng.uniform(0.22, 0.34) * size;
  const double x0 = size / 2.0 + rng.uniform(-0.05, 0.05) * size;
  const double y0 = size / 2.0 + rng.uniform(-0.05, 0.05) * size;
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double period = rng.uniform(20.0, 40.0);
  const double drift = 0.03 * size;
  const double gain = rng.uniform(1.0 - cfg.illumination_jitter, 1.0 + cfg.illumination_jitter);
  for (int f = 0; f < frames; ++f) {
    const MouthShape shape = symbol_shape(cfg, s.symbols[f / cfg.frames_per_symbol]);
    FrameGeometry g;
    g.cx = x0 + drift * std::sin(2.0 * M_PI * f / period + phase);
    g.cy = y0 + 0.5 * drift * std::cos(2.0 * M_PI * f / period + phase);
    g.ax = width / 2.0;
    g.ay = g.ax * std::max(0.05, shape.aspect + rng.normal(0.0, cfg.aspect_jitter));
    render_frame(s.video, f, g, shape, gain, cfg.pixel_noise, rng);
    place_landmarks(s.landmarks, f, g);
  }
  return s;
}

CorpusPaths gen_corpus(const SynthConfig& cfg, int n_samples, std::array<double, 3> ratios,
                       const fs::path& out_dir) {
  cfg.validate();
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  CorpusPaths paths;
  paths.counts[0] = static_cast<int>(std::lround(n_samples * ratios[0]));
  paths.counts[1] = std::min(n_samples - paths.counts[0],
                             static_cast<int>(std::lround(n_samples * ratios[1])));
  paths.counts[2] = n_samples - paths.counts[0] - paths.counts[1];

  const fs::path media = out_dir / "media";
  fs::create_directories(media);
  std::array<std::vector<SampleManifestEntry>, 3> manifests;
  Rng length_rng(derive_seed(cfg.seed, kCorpusSalt));
  for (int i = 0; i < n_samples; ++i) {
    const int length = cfg.min_symbols +
                       static_cast<int>(length_rng.index(
                           static_cast<uint64_t>(cfg.max_symbols - cfg.min_symbols + 1)));
    const std::string id = fmt::format("synth_{:05d}", i);
    const SynthSample s = gen_sample(cfg, length, derive_seed(cfg.seed, kCorpusSalt + 1 + i), id);
    SampleManifestEntry e;
    e.sample_id = id;
    e.video_path = media / (id + ".lvv");
    e.landmark_path = media / (id + ".lmk");
    e.audio_path = media / (id + ".lvf");
    e.duration_s = s.video.frames / cfg.fps;
    write_video(e.video_path, s.video);
    write_landmarks(e.landmark_path, s.landmarks);
    write_features(*e.audio_path, s.audio);
    const int split = i < paths.counts[0] ? 0 : (i < paths.counts[0] + paths.counts[1] ? 1 : 2);
    if (split == 0) {
      e.label_source = LabelSource::kNone;
    } else {
      e.label_source = LabelSource::kHuman;
      e.transcript = s.transcript;
    }
    manifests[split].push_back(std::move(e));
  }
  paths.pretrain = out_dir / "pretrain.jsonl";
  paths.finetune = out_dir / "finetune.jsonl";
  paths.test = out_dir / "test.jsonl";
  write_manifest(paths.pretrain, manifests[0]);
  write_manifest(paths.finetune, manifests[1]);
  write_manifest(paths.test, manifests[2]);
  return paths;
}

namespace {

struct AudioSample {
  Matrix audio;
  std::string transcript;
  std::vector<int> tokens;
};

std::vector<AudioSample> audio_samples(const SynthConfig& cfg, int n, uint64_t seed,
                                       const Vocabulary& vocab) {
  std::vector<AudioSample> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int length = cfg.min_symbols +
                       static_cast<int>(rng.index(
                           static_cast<uint64_t>(cfg.max_symbols - cfg.min_symbols + 1)));
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(i) + 1);
    const auto symbols = gen_symbol_sequence(cfg, length, derive_seed(s, 1));
    AudioSample a;
    a.audio = render_audio(cfg, symbols, derive_seed(s, 2));
    a.transcript = symbols_to_text(symbols, cfg);
    a.tokens = vocab.encode(a.transcript).ids;
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

std::shared_ptr<AcousticModel> train_teacher(const SynthConfig& cfg, const TeacherConfig& tcfg) {
  cfg.validate();
  const Vocabulary vocab = Vocabulary::characters();
  AcousticModelConfig mcfg = tcfg.model;
  mcfg.input_dim = cfg.audio_dim;
  mcfg.vocab_size = vocab.size();
  auto model = build_acoustic_model(mcfg, derive_seed(tcfg.seed, kTeacherSalt));
  const auto data = audio_samples(cfg, tcfg.num_samples, derive_seed(tcfg.seed, kTeacherSalt + 1),
                                  vocab);
  const auto params = model->parameters();
  nn::Adam adam(params, {});
  const ScheduleConfig sched{tcfg.warmup_steps, tcfg.peak_lr};
  for (int s = 1; s <= tcfg.steps; ++s) {
    nn::zero_grad(params);
    std::vector<nn::Var> losses;
    for (int idx : batch_indices(s, tcfg.batch_size, static_cast<int>(data.size()), tcfg.seed)) {
      const auto logits = model->forward(nn::from_matrix(data[idx].audio));
      losses.push_back(ctc_loss(logits, data[idx].tokens, mcfg.vocab_size));
    }
    const auto loss = nn::scale(nn::add_n(losses), 1.0 / static_cast<double>(losses.size()));
    loss.backward();
    nn::clip_grad_norm(params, 1.0);
    adam.step(noam_lr(s, sched));
    if (s % 100 == 0) spdlog::debug("teacher step {} ctc {:.4f}", s, loss.item());
  }
  return model;
}

double teacher_wer(const AcousticModel& model, const SynthConfig& cfg, int num_samples,
                   uint64_t seed) {
  const Vocabulary vocab = Vocabulary::characters();
  const auto data = audio_samples(cfg, num_samples, seed, vocab);
  nn::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& a : data) {
    const Matrix logits = nn::to_matrix(model.forward(nn::from_matrix(a.audio)));
    const auto hyp = vocab.decode(greedy_ctc_decode(logits, model.config().vocab_size).ids);
    total += wer(a.transcript, hyp);
  }
  return total / num_samples;
}

std::vector<double> log_spaced_gains(int dim, double lo, double hi, uint64_t seed) {
  if (dim < 1 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("invalid gain range");
  std::vector<double> g(dim);
  for (int i = 0; i < dim; ++i) {
    const double t = dim == 1 ? 0.0 : static_cast<double>(i) / (dim - 1);
    g[i] = lo * std::pow(hi / lo, t);
  }
  Rng rng(seed);
  for (int i = dim - 1; i > 0; --i) std::swap(g[i], g[rng.index(static_cast<uint64_t>(i) + 1)]);
  return g;
}

}  // namespace litevsr
