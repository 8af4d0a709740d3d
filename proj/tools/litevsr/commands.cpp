#include "commands.hpp"

#include <fstream>
#include <memory>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "litevsr/acoustic_model.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/eval.hpp"
#include "litevsr/feature_norm.hpp"
#include "litevsr/manifest.hpp"
#include "litevsr/media.hpp"
#include "litevsr/nn/tensor.hpp"
#include "litevsr/rng.hpp"
#include "litevsr/synth.hpp"
#include "litevsr/training.hpp"
#include "litevsr/visual_base.hpp"
#include "settings.hpp"

namespace litevsr::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path& need(const fs::path& p, const char* flag) {
  if (p.empty()) throw DataError(fmt::format("missing required flag {}", flag));
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

// Creates the output directory and records the effective settings in it.
const fs::path& prepare_out_dir(const Inputs& in, const json& settings) {
  const fs::path& dir = need(in.out_dir, "--out-dir");
  fs::create_directories(dir);
  write_json(dir / "config.json", settings);
  return dir;
}

std::vector<SampleManifestEntry> load_entries(const Inputs& in) {
  auto entries = load_manifest(need(in.manifest, "--manifest"), {.strict = true}).entries;
  if (entries.empty()) throw DataError(fmt::format("manifest {} is empty", in.manifest.string()));
  return entries;
}

struct Teacher {
  std::shared_ptr<AcousticModel> model;
  AcousticSplit split;
};

Teacher load_teacher(const fs::path& path) {
  auto model = AcousticModel::load(path);
  auto split = split_model(model, model->config().split_layer);
  return {model, std::move(split)};
}

Vocabulary load_vocab(const Inputs& in, const AudioHead& head) {
  auto vocab = in.vocab.empty() ? Vocabulary::characters() : Vocabulary::load(in.vocab);
  if (vocab.size() != head.blank_id()) {
    throw DimensionError(fmt::format("vocabulary has {} tokens, acoustic model expects {}",
                                     vocab.size(), head.blank_id()));
  }
  return vocab;
}

NormalizationStats load_stats(const Inputs& in) {
  return NormalizationStats::load(need(in.stats, "--stats"));
}

ExampleLoadOptions example_options(const json& settings, const TrainConfig* train) {
  ExampleLoadOptions lo;
  lo.crop = crop_config(settings);
  lo.keep_video = train != nullptr && train->augment.has_value();
  return lo;
}

bool is_state_file(const fs::path& p) { return p.extension() == ".json"; }

// Copies the training metrics next to a resumed run so the input directory
// is left untouched.
void carry_metrics(const fs::path& state_path, const fs::path& out_dir) {
  const fs::path src = state_path.parent_path() / "metrics.csv";
  const fs::path dst = out_dir / "metrics.csv";
  if (fs::exists(src) && !fs::equivalent(state_path.parent_path(), out_dir)) {
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
  }
}

void report_log(const TrainLog& log, const char* phase) {
  if (log.records.empty()) {
    fmt::print("{}: nothing to do, already at the final step\n", phase);
    return;
  }
  const auto& first = log.records.front();
  const auto& last = log.records.back();
  fmt::print("{}: steps {}..{}, loss {:.5g} -> {:.5g}, {} checkpoints\n", phase, first.step,
             last.step, first.loss_total, last.loss_total, log.checkpoints.size());
}

}  // namespace

int run_synth(const json& settings, const Inputs& in) {
  const fs::path& dir = prepare_out_dir(in, settings);
  const SynthConfig sc = synth_config(settings);
  const auto paths = gen_corpus(sc, synth_samples(settings), synth_split(settings), dir);
  const TeacherConfig tc = teacher_config(settings);
  spdlog::info("training teacher for {} steps", tc.steps);
  const auto teacher = train_teacher(sc, tc);
  teacher->save(dir / "teacher.lvw");
  Vocabulary::characters().save(dir / "vocab.txt");
  const double teacher_err = teacher_wer(*teacher, sc, 50, derive_seed(sc.seed, 99));
  write_json(dir / "synth.json", {{"pretrain", paths.pretrain.filename().string()},
                                  {"finetune", paths.finetune.filename().string()},
                                  {"test", paths.test.filename().string()},
                                  {"counts", paths.counts},
                                  {"teacher", "teacher.lvw"},
                                  {"teacher_wer", teacher_err}});
  fmt::print("wrote {} / {} / {} samples to {}; teacher audio-only WER {:.3f}\n", paths.counts[0],
             paths.counts[1], paths.counts[2], dir.string(), teacher_err);
  return 0;
}

int run_stats(const json& settings, const Inputs& in) {
  const auto entries = load_entries(in);
  const Teacher t = load_teacher(need(in.teacher, "--teacher"));
  const fs::path& dir = prepare_out_dir(in, settings);
  const auto stats = compute_base_stats(entries, t.split.base,
                                        settings.at("stats").at("sigma_floor").get<double>());
  stats.save(dir / "stats.json");
  const auto clamped = stats.clamped();
  fmt::print("stats over {} frames, dim {}, {} clamped features -> {}\n", stats.frame_count,
             stats.dim(), std::count(clamped.begin(), clamped.end(), true),
             (dir / "stats.json").string());
  return 0;
}

int run_crop(const json& settings, const Inputs& in) {
  const auto entries = load_entries(in);
  const CropConfig cc = crop_config(settings);
  const fs::path& dir = prepare_out_dir(in, settings);
  fs::create_directories(dir / "clips");
  fs::create_directories(dir / "plans");
  json index = json::array();
  for (const auto& e : entries) {
    const RawVideo video = read_video(e.video_path);
    const LandmarkTrack track = read_landmarks(e.landmark_path);
    const CropPlan plan = plan_crop(mouth_geometry(track, cc.landmarks), cc);
    const VideoTensor clip = apply_plan(video, plan, cc);
    const fs::path clip_path = dir / "clips" / (e.sample_id + ".lvv");
    const fs::path plan_path = dir / "plans" / (e.sample_id + ".json");
    write_video(clip_path, to_raw_video(clip, video.fps));
    plan.save(plan_path);
    index.push_back({{"sample_id", e.sample_id},
                     {"clip", fs::relative(clip_path, dir).string()},
                     {"plan", fs::relative(plan_path, dir).string()},
                     {"frames", clip.frames}});
  }
  write_json(dir / "crops.json", {{"mode", to_string(cc.mode)}, {"clips", index}});
  fmt::print("cropped {} clips ({} mode, {}px) -> {}\n", entries.size(), to_string(cc.mode),
             cc.out_size, dir.string());
  return 0;
}

int run_pretrain(const json& settings, const Inputs& in) {
  const auto entries = load_entries(in);
  const Teacher t = load_teacher(need(in.teacher, "--teacher"));
  const auto stats = load_stats(in);
  TrainConfig cfg = train_config(settings, "pretrain");
  const fs::path& dir = prepare_out_dir(in, settings);
  cfg.out_dir = dir;

  std::optional<TrainingState> resume;
  std::shared_ptr<VisualBase> visual;
  if (!in.checkpoint.empty() && is_state_file(in.checkpoint)) {
    resume = TrainingState::load(in.checkpoint);
    visual = VisualBase::load(resume->visual);
    cfg.seed = resume->seed;
    carry_metrics(in.checkpoint, dir);
  } else if (!in.checkpoint.empty()) {
    visual = VisualBase::load(in.checkpoint);
  } else {
    visual = std::make_shared<VisualBase>(visual_config(settings, t.split.base.dim()),
                                          derive_seed(settings.at("seed").get<uint64_t>(), 4));
  }
  const auto examples =
      load_examples(entries, example_options(settings, &cfg), &t.split.base, &stats, nullptr);
  const auto log = pretrain(*visual, examples, cfg, resume ? &*resume : nullptr);
  visual->save(dir / "visual.lvw");
  report_log(log, "pretrain");
  return 0;
}

int run_finetune(const json& settings, const Inputs& in) {
  need(in.checkpoint, "--checkpoint");
  const auto entries = load_entries(in);
  const auto stats = load_stats(in);
  TrainConfig cfg = train_config(settings, "finetune");
  const fs::path& dir = prepare_out_dir(in, settings);
  cfg.out_dir = dir;

  std::optional<TrainingState> resume;
  fs::path teacher_path = need(in.teacher, "--teacher");
  std::shared_ptr<VisualBase> visual;
  if (is_state_file(in.checkpoint)) {
    const auto state = TrainingState::load(in.checkpoint);
    visual = VisualBase::load(state.visual);
    if (state.phase == "finetune") {
      resume = state;
      cfg.seed = state.seed;
      if (state.head) teacher_path = *state.head;
      carry_metrics(in.checkpoint, dir);
    }
  } else {
    visual = VisualBase::load(in.checkpoint);
  }
  const Teacher t = load_teacher(teacher_path);
  const auto vocab = load_vocab(in, t.split.head);
  const auto examples =
      load_examples(entries, example_options(settings, &cfg), &t.split.base, &stats, &vocab);
  const auto log = finetune(*visual, t.split, stats, examples, cfg, resume ? &*resume : nullptr);
  visual->save(dir / "visual.lvw");
  if (cfg.loss.train_head) t.model->save(dir / "head.lvw");
  report_log(log, "finetune");
  return 0;
}

int run_eval(const json& settings, const Inputs& in) {
  const auto entries = load_entries(in);
  const auto stats = load_stats(in);
  const fs::path& ckpt = need(in.checkpoint, "--checkpoint");
  fs::path teacher_path = need(in.teacher, "--teacher");
  fs::path visual_path = ckpt;
  if (is_state_file(ckpt)) {
    const auto state = TrainingState::load(ckpt);
    visual_path = state.visual;
    if (state.head) teacher_path = *state.head;
  }
  const auto visual = VisualBase::load(visual_path);
  const Teacher t = load_teacher(teacher_path);
  const auto vocab = load_vocab(in, t.split.head);
  const fs::path& dir = prepare_out_dir(in, settings);
  const auto examples =
      load_examples(entries, example_options(settings, nullptr), &t.split.base, &stats, &vocab);
  for (const auto& ex : examples) {
    if (!ex.labeled) throw DataError(fmt::format("eval: sample {} has no transcript", ex.sample_id));
  }
  const auto records = evaluate(examples, visual_encoder(*visual), t.split.head, stats, vocab);
  write_records_csv(dir / "records.csv", records);

  auto mean_of = [&](auto field) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : records) {
      if (const auto v = field(r)) s += *v, ++n;
    }
    return n > 0 ? json(s / n) : json(nullptr);
  };
  const json summary{
      {"samples", records.size()},
      {"checkpoint", visual_path.string()},
      {"wer", mean_wer(records)},
      {"cer", mean_of([](const SampleRecord& r) { return std::optional(r.cer); })},
      {"ctc_loss", mean_of([](const SampleRecord& r) { return std::optional(r.ctc_loss); })},
      {"enc_loss", mean_of([](const SampleRecord& r) { return r.enc_loss; })}};
  write_json(dir / "summary.json", summary);
  fmt::print("eval {} samples: WER {:.4f}, CER {:.4f}, CTC {:.4f}, enc {}\n", records.size(),
             summary["wer"].get<double>(), summary["cer"].get<double>(),
             summary["ctc_loss"].get<double>(), summary["enc_loss"].dump());
  return 0;
}

int run_analyze(const json& settings, const Inputs& in) {
  if (in.records.empty()) throw DataError("missing required flag --records");
  std::vector<SampleRecord> pooled;
  for (const auto& p : in.records) {
    const auto recs = read_records_csv(p);
    pooled.insert(pooled.end(), recs.begin(), recs.end());
  }
  const fs::path& dir = prepare_out_dir(in, settings);
  const auto report = correlation_report(pooled);
  write_scatter_csv(dir / "scatter.csv", pooled);
  write_correlation_json(dir / "correlation.json", report);
  fmt::print("{} points: enc vs ctc r {:.4f} (slope {:.4g}), enc vs wer r {:.4f} (slope {:.4g})\n",
             report.enc_ctc.n, report.enc_ctc.pearson_r, report.enc_ctc.slope,
             report.enc_wer.pearson_r, report.enc_wer.slope);
  return 0;
}

int run_report_features(const json& settings, const Inputs& in) {
  const auto entries = load_entries(in);
  const Teacher t = load_teacher(need(in.teacher, "--teacher"));
  const auto stats = load_stats(in);
  if (stats.dim() != t.split.base.dim()) {
    throw DimensionError(fmt::format("stats dim {} does not match the audio base dim {}",
                                     stats.dim(), t.split.base.dim()));
  }
  const int bins = settings.at("report").at("bins");
  if (bins < 1) throw ConfigError("report.bins must be >= 1");
  const fs::path& dir = prepare_out_dir(in, settings);

  std::vector<FeatureSequence> source;
  {
    nn::NoGradGuard no_grad;
    for (const auto& e : entries) {
      if (!e.audio_path) continue;
      const Matrix feats = read_features(*e.audio_path);
      if (feats.cols() != t.split.base.input_dim()) {
        throw DimensionError(fmt::format("sample {}: audio has {} features, model expects {}",
                                         e.sample_id, feats.cols(), t.split.base.input_dim()));
      }
      source.emplace_back(nn::to_matrix(t.split.base.forward(nn::from_matrix(feats))));
    }
  }
  if (source.empty()) throw DataError("report-features: no manifest entry has audio features");
  const auto report = feature_report(stats, source, bins);
  write_feature_report(report, dir / "feature_summary.csv", dir / "feature_histogram.csv");
  write_json(dir / "feature_report.json",
             {{"largest_variance_feature", report.largest_variance_feature},
              {"multimodal_features", report.multimodal_features}});
  fmt::print("{} features over {} sequences; largest variance feature {}; {} multimodal\n",
             report.features.size(), source.size(), report.largest_variance_feature,
             report.multimodal_features.size());
  return 0;
}

}  // namespace litevsr::cli
