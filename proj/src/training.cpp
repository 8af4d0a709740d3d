#include "litevsr/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "litevsr/ctc.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/nn/adam.hpp"
#include "litevsr/nn/weights.hpp"
#include "litevsr/rng.hpp"

namespace litevsr {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Var;

void ScheduleConfig::validate() const {
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
}

double noam_lr(int64_t step, const ScheduleConfig& sched) {
  sched.validate();
  if (step < 1) throw ConfigError(fmt::format("noam_lr: step must be >= 1, got {}", step));
  const auto s = static_cast<double>(step);
  const auto w = static_cast<double>(sched.warmup_steps);
  if (step <= sched.warmup_steps) return sched.peak_lr * (s / w);
  return sched.peak_lr * std::sqrt(w / s);
}

void OptimizerConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void FinetuneLossConfig::validate() const {
  if (!(ctc_weight > 0.0)) throw ConfigError("ctc_weight must be positive");
  if (!(enc_weight >= 0.0)) throw ConfigError("enc_weight must be >= 0");
}

double encoding_loss(const BatchedFeatures& audio_raw, const BatchedFeatures& visual,
                     const NormalizationStats& stats) {
  if (audio_raw.batch() != visual.batch() || audio_raw.dim() != visual.dim()) {
    throw DimensionError(fmt::format("encoding_loss: audio [{} x {}] vs visual [{} x {}]",
                                     audio_raw.batch(), audio_raw.dim(), visual.batch(),
                                     visual.dim()));
  }
  if (audio_raw.dim() != stats.dim()) {
    throw DimensionError("encoding_loss: stats dimension differs from the features");
  }
  double total = 0.0;
  int64_t count = 0;
  for (int n = 0; n < visual.batch(); ++n) {
    if (audio_raw.lengths()[n] != visual.lengths()[n]) {
      throw DimensionError(fmt::format("encoding_loss: sample {} lengths {} vs {}; align first", n,
                                       audio_raw.lengths()[n], visual.lengths()[n]));
    }
    for (int t = 0; t < visual.lengths()[n]; ++t) {
      for (int j = 0; j < visual.dim(); ++j) {
        const double target = (audio_raw.at(n, t, j) - stats.mu[j]) / stats.sigma[j];
        const double d = target - visual.at(n, t, j);
        total += d * d;
      }
    }
    count += static_cast<int64_t>(visual.lengths()[n]) * visual.dim();
  }
  if (count == 0) throw DataError("encoding_loss: no valid frames");
  return total / static_cast<double>(count);
}

std::vector<TrainingExample> load_examples(std::span<const SampleManifestEntry> entries,
                                           const ExampleLoadOptions& options,
                                           const AudioBase* audio_base,
                                           const NormalizationStats* stats,
                                           const Vocabulary* vocab) {
  options.crop.validate();
  std::vector<TrainingExample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    TrainingExample ex;
    ex.sample_id = e.sample_id;
    ex.labeled = e.labeled();
    if (options.require_labels && !ex.labeled) {
      throw DataError(fmt::format("sample {}: unlabeled sample in a labeled set", e.sample_id));
    }
    RawVideo video = read_video(e.video_path);
    const LandmarkTrack track = read_landmarks(e.landmark_path);
    if (track.frames() != video.frames) {
      throw DataError(fmt::format("sample {}: {} landmark frames for {} video frames", e.sample_id,
                                  track.frames(), video.frames));
    }
    ex.plan = plan_crop(mouth_geometry(track, options.crop.landmarks), options.crop);
    ex.clip = apply_plan(video, ex.plan, options.crop);
    if (options.keep_video) ex.video = std::move(video);

    if (audio_base != nullptr && stats != nullptr) {
      if (e.audio_path) {
        const Matrix feats = read_features(*e.audio_path);
        if (feats.cols() != audio_base->input_dim()) {
          throw DimensionError(fmt::format("sample {}: audio has {} features, model expects {}",
                                           e.sample_id, feats.cols(), audio_base->input_dim()));
        }
        nn::NoGradGuard no_grad;
        const Matrix raw = nn::to_matrix(audio_base->forward(nn::from_matrix(feats)));
        ex.target = normalize(raw, *stats);
      } else if (options.require_audio) {
        throw DataError(fmt::format("sample {}: no audio features", e.sample_id));
      }
    }
    if (ex.labeled) {
      ex.transcript = *e.transcript;
      if (vocab != nullptr) ex.tokens = vocab->encode(ex.transcript).ids;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

NormalizationStats compute_base_stats(std::span<const SampleManifestEntry> entries,
                                      const AudioBase& base, double sigma_floor) {
  StatsAccumulator acc(base.dim());
  nn::NoGradGuard no_grad;
  for (const auto& e : entries) {
    if (!e.audio_path) continue;
    const Matrix feats = read_features(*e.audio_path);
    if (feats.cols() != base.input_dim()) {
      throw DimensionError(fmt::format("sample {}: audio has {} features, model expects {}",
                                       e.sample_id, feats.cols(), base.input_dim()));
    }
    acc.add_frames(nn::to_matrix(base.forward(nn::from_matrix(feats))));
  }
  if (acc.frame_count() == 0) throw DataError("compute_base_stats: no entry has audio features");
  return acc.finalize(sigma_floor);
}

void TrainingState::save(const fs::path& path) const {
  json j{{"phase", phase},
         {"step", step},
         {"seed", seed},
         {"visual", visual.filename().string()},
         {"optimizer", optimizer.filename().string()}};
  if (head) j["head"] = head->filename().string();
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

TrainingState TrainingState::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open training state {}", path.string()));
  TrainingState s;
  try {
    const json j = json::parse(in);
    const fs::path dir = path.parent_path();
    s.phase = j.at("phase").get<std::string>();
    s.step = j.at("step").get<int64_t>();
    s.seed = j.at("seed").get<uint64_t>();
    s.visual = dir / j.at("visual").get<std::string>();
    s.optimizer = dir / j.at("optimizer").get<std::string>();
    if (j.contains("head")) s.head = dir / j.at("head").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return s;
}

std::vector<int> batch_indices(int64_t step, int batch_size, int num_examples, uint64_t seed) {
  if (num_examples <= 0) throw DataError("no training examples");
  if (step < 1) throw ConfigError("steps are 1-based");
  std::vector<int> out;
  out.reserve(batch_size);
  int64_t cached_epoch = -1;
  std::vector<int> perm(num_examples);
  for (int j = 0; j < batch_size; ++j) {
    const int64_t cursor = (step - 1) * batch_size + j;
    const int64_t epoch = cursor / num_examples;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(seed, static_cast<uint64_t>(epoch)));
      for (int i = num_examples - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.index(static_cast<uint64_t>(i) + 1)]);
      }
      cached_epoch = epoch;
    }
    out.push_back(perm[cursor % num_examples]);
  }
  return out;
}

void write_metrics_csv(const fs::path& path, std::span<const StepRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << "step,lr,loss_enc,loss_ctc,loss_total\n";
  for (const auto& r : records) {
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.step, r.lr, r.loss_enc,
                       r.loss_ctc, r.loss_total);
  }
}

namespace {

constexpr uint64_t kAugmentSalt = 0x6175676d656e74ULL;

std::vector<StepRecord> read_metrics_prefix(const fs::path& path, int64_t last_step) {
  std::vector<StepRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    StepRecord r;
    char comma = 0;
    std::istringstream ss(line);
    ss >> r.step >> comma >> r.lr >> comma >> r.loss_enc >> comma >> r.loss_ctc >> comma >>
        r.loss_total;
    if (!ss || r.step > last_step) continue;
    out.push_back(r);
  }
  return out;
}

const VideoTensor& clip_for(const TrainingExample& ex, const TrainConfig& cfg, uint64_t seed,
                            VideoTensor& scratch) {
  if (!cfg.augment) return ex.clip;
  if (!ex.video) throw ConfigError("crop augmentation needs examples loaded with keep_video");
  AugmentConfig aug = *cfg.augment;
  aug.seed = seed;
  scratch = apply_plan(*ex.video, augment_plan(ex.plan, aug), cfg.crop);
  return scratch;
}

// Squared error between the visual output and the target over their common
// length, plus the number of elements compared.
std::pair<Var, int64_t> encoding_error(const Var& visual, const Matrix& target,
                                       const std::string& sample_id) {
  const int tv = visual.dim(0);
  const int ta = static_cast<int>(target.rows());
  if (visual.dim(1) != target.cols()) {
    throw DimensionError(fmt::format("sample {}: visual dim {} vs target dim {}", sample_id,
                                     visual.dim(1), target.cols()));
  }
  const int len = std::min(tv, ta);
  if (std::abs(tv - ta) > 2) {
    spdlog::warn("sample {}: visual length {} vs audio length {}", sample_id, tv, ta);
  }
  const Matrix t = target.topRows(len);
  return {nn::squared_error_sum(nn::slice_rows(visual, 0, len), nn::from_matrix(t)),
          static_cast<int64_t>(len) * t.cols()};
}

}  // namespace

Var encoding_loss(std::span<const Var> visual, std::span<const Matrix> targets) {
  if (visual.size() != targets.size()) {
    throw DimensionError(fmt::format("encoding_loss: {} outputs for {} targets", visual.size(),
                                     targets.size()));
  }
  std::vector<Var> errors;
  int64_t count = 0;
  for (size_t n = 0; n < visual.size(); ++n) {
    auto [err, elems] = encoding_error(visual[n], targets[n], fmt::format("#{}", n));
    errors.push_back(err);
    count += elems;
  }
  if (count == 0) throw DataError("encoding_loss: no valid frames");
  return nn::scale(nn::add_n(errors), 1.0 / static_cast<double>(count));
}

namespace {

struct Phase {
  std::string name;
  nn::ParameterList trainable;
  // Builds the batch loss, runs backward and fills the loss fields.
  std::function<void(std::span<const int>, int64_t, StepRecord&)> step;
  std::function<std::optional<fs::path>(const fs::path&, int64_t)> save_extra;
};

TrainLog run_phase(VisualBase& visual, std::span<const TrainingExample> examples,
                   const TrainConfig& cfg, const TrainingState* resume, const Phase& phase) {
  cfg.schedule.validate();
  cfg.optimizer.validate();
  if (examples.empty()) throw DataError(fmt::format("{}: no training examples", phase.name));
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");

  nn::Adam adam(phase.trainable, {cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.epsilon});
  int64_t start = 0;
  std::vector<StepRecord> history;
  const fs::path metrics_path = cfg.out_dir.empty() ? fs::path() : cfg.out_dir / cfg.metrics_file;
  if (resume != nullptr) {
    if (resume->phase != phase.name) {
      throw ConfigError(fmt::format("cannot resume {} from a {} state", phase.name, resume->phase));
    }
    nn::load_parameters(visual.parameters(), nn::read_weights(resume->visual));
    adam.load_state(nn::read_weights(resume->optimizer));
    start = resume->step;
    if (!metrics_path.empty()) history = read_metrics_prefix(metrics_path, start);
  }
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  TrainLog log;
  for (int64_t s = start + 1; s <= cfg.steps; ++s) {
    const auto idx = batch_indices(s, cfg.optimizer.batch_size, static_cast<int>(examples.size()),
                                   cfg.seed);
    nn::zero_grad(phase.trainable);
    StepRecord rec;
    rec.step = s;
    rec.lr = noam_lr(s, cfg.schedule);
    phase.step(idx, s, rec);
    if (!std::isfinite(rec.loss_total)) {
      throw NumericError(fmt::format("{}: non-finite loss at step {}", phase.name, s));
    }
    rec.grad_norm = cfg.optimizer.clip_norm > 0.0
                        ? nn::clip_grad_norm(phase.trainable, cfg.optimizer.clip_norm)
                        : nn::global_grad_norm(phase.trainable);
    if (!std::isfinite(rec.grad_norm)) {
      throw NumericError(fmt::format("{}: non-finite gradient at step {}", phase.name, s));
    }
    adam.step(rec.lr);
    log.records.push_back(rec);
    history.push_back(rec);
    spdlog::debug("{} step {} lr {:.3g} loss {:.5g}", phase.name, s, rec.lr, rec.loss_total);

    const bool checkpoint =
        s == cfg.steps || (cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0);
    if (checkpoint && !cfg.out_dir.empty()) {
      TrainingState state;
      state.phase = phase.name;
      state.step = s;
      state.seed = cfg.seed;
      state.visual = cfg.out_dir / fmt::format("{}_step{}.lvw", phase.name, s);
      state.optimizer = cfg.out_dir / fmt::format("{}_optim_step{}.lvw", phase.name, s);
      visual.save(state.visual);
      nn::write_weights(state.optimizer, adam.state());
      if (phase.save_extra) state.head = phase.save_extra(cfg.out_dir, s);
      const fs::path state_path = cfg.out_dir / fmt::format("{}_step{}.json", phase.name, s);
      state.save(state_path);
      write_metrics_csv(metrics_path, history);
      log.checkpoints.push_back(state_path);
    }
  }
  return log;
}

uint64_t augment_seed(const TrainConfig& cfg, int64_t step, int j) {
  return derive_seed(derive_seed(cfg.seed, kAugmentSalt),
                     static_cast<uint64_t>((step - 1) * cfg.optimizer.batch_size + j));
}

}  // namespace

TrainLog pretrain(VisualBase& visual, std::span<const TrainingExample> examples,
                  const TrainConfig& cfg, const TrainingState* resume) {
  for (const auto& ex : examples) {
    if (!ex.target) {
      throw DataError(fmt::format("pretrain: sample {} has no teacher target (missing audio or "
                                  "stats)", ex.sample_id));
    }
  }
  Phase phase;
  phase.name = "pretrain";
  phase.trainable = visual.parameters();
  phase.step = [&](std::span<const int> idx, int64_t s, StepRecord& rec) {
    std::vector<Var> outputs;
    std::vector<Matrix> targets;
    VideoTensor scratch;
    for (size_t j = 0; j < idx.size(); ++j) {
      const auto& ex = examples[idx[j]];
      outputs.push_back(visual.forward(
          clip_for(ex, cfg, augment_seed(cfg, s, static_cast<int>(j)), scratch)));
      targets.push_back(*ex.target);
    }
    const Var loss = encoding_loss(outputs, targets);
    loss.backward();
    rec.loss_enc = loss.item();
    rec.loss_total = rec.loss_enc;
  };
  return run_phase(visual, examples, cfg, resume, phase);
}

TrainLog finetune(VisualBase& visual, const AcousticSplit& split, const NormalizationStats& stats,
                  std::span<const TrainingExample> examples, const TrainConfig& cfg,
                  const TrainingState* resume) {
  cfg.loss.validate();
  stats.validate();
  if (stats.dim() != split.head.dim() || visual.config().output_dim != split.head.dim()) {
    throw DimensionError(fmt::format("finetune: visual dim {}, stats dim {}, head dim {}",
                                     visual.config().output_dim, stats.dim(), split.head.dim()));
  }
  for (const auto& ex : examples) {
    if (!ex.labeled) {
      throw DataError(fmt::format("finetune: unlabeled sample {} encountered", ex.sample_id));
    }
    if (cfg.loss.enc_weight > 0.0 && !ex.target) {
      throw DataError(fmt::format("finetune: sample {} has no teacher target for the encoding "
                                  "term", ex.sample_id));
    }
  }
  const std::vector<double> sigma(stats.sigma.data(), stats.sigma.data() + stats.dim());
  const std::vector<double> mu(stats.mu.data(), stats.mu.data() + stats.dim());
  const auto head_params = split.head.parameters();
  const int blank = split.head.blank_id();

  Phase phase;
  phase.name = "finetune";
  phase.trainable = visual.parameters();
  if (cfg.loss.train_head) {
    phase.trainable.insert(phase.trainable.end(), head_params.begin(), head_params.end());
    phase.save_extra = [&](const fs::path& dir, int64_t s) -> std::optional<fs::path> {
      const fs::path p = dir / fmt::format("finetune_head_step{}.lvw", s);
      split.model->save(p);
      return p;
    };
  }
  nn::set_requires_grad(head_params, cfg.loss.train_head);
  phase.step = [&](std::span<const int> idx, int64_t s, StepRecord& rec) {
    std::vector<Var> ctc_terms;
    std::vector<Var> enc_terms;
    int64_t count = 0;
    VideoTensor scratch;
    for (size_t j = 0; j < idx.size(); ++j) {
      const auto& ex = examples[idx[j]];
      const Var v = visual.forward(clip_for(ex, cfg, augment_seed(cfg, s, static_cast<int>(j)),
                                            scratch));
      const Var logits = split.head.forward(nn::affine_columns(v, sigma, mu));
      ctc_terms.push_back(ctc_loss(logits, ex.tokens, blank));
      if (cfg.loss.enc_weight > 0.0) {
        auto [err, n] = encoding_error(v, *ex.target, ex.sample_id);
        enc_terms.push_back(err);
        count += n;
      }
    }
    const Var ctc = nn::scale(nn::add_n(ctc_terms), 1.0 / static_cast<double>(idx.size()));
    Var total = nn::scale(ctc, cfg.loss.ctc_weight);
    if (!enc_terms.empty()) {
      const Var enc = nn::scale(nn::add_n(enc_terms), 1.0 / static_cast<double>(count));
      rec.loss_enc = enc.item();
      total = nn::add_scaled(total, enc, cfg.loss.enc_weight);
    }
    total.backward();
    rec.loss_ctc = ctc.item();
    rec.loss_total = total.item();
  };

  if (resume != nullptr && resume->head) {
    nn::load_parameters(split.model->parameters(), nn::read_weights(*resume->head));
  }
  try {
    auto log = run_phase(visual, examples, cfg, resume, phase);
    nn::set_requires_grad(head_params, true);
    return log;
  } catch (...) {
    nn::set_requires_grad(head_params, true);
    throw;
  }
}

}  // namespace litevsr
