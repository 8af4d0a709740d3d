// litevsr: command-line front end for visual speech recognition by distilling
// the encoder of a pretrained speech recognizer.

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <cli11/CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "litevsr/errors.hpp"
#include "settings.hpp"

namespace {

using json = nlohmann::json;
using litevsr::cli::Inputs;
using Overrides = std::vector<std::pair<std::string, json>>;

template <typename T>
CLI::Option* add_setting(CLI::App* app, const std::string& flag, const std::string& key,
                         const std::string& help, Overrides& overrides) {
  return app->add_option_function<T>(
      flag, [&overrides, key](const T& v) { overrides.emplace_back(key, json(v)); }, help);
}

void add_crop_flags(CLI::App* app, Overrides& ov) {
  add_setting<std::string>(app, "--mode", "crop.mode", "Mouth crop mode", ov)
      ->check(CLI::IsMember({"framewise", "smooth", "fixed"}));
  add_setting<double>(app, "--sigma", "crop.sigma", "Gaussian smoothing sigma in frames (smooth)",
                      ov);
  add_setting<int>(app, "--out-size", "crop.out_size", "Crop side in pixels", ov)
      ->check(CLI::IsMember({88, 96}));
}

void add_train_flags(CLI::App* app, const std::string& phase, Overrides& ov) {
  add_setting<int64_t>(app, "--warmup", phase + ".warmup", "Learning-rate warmup steps", ov);
  add_setting<double>(app, "--peak-lr", phase + ".peak_lr", "Peak learning rate", ov);
  add_setting<int>(app, "--batch-size", phase + ".batch_size", "Samples per step", ov);
  add_setting<int64_t>(app, "--steps", phase + ".steps", "Total optimizer steps", ov);
  add_setting<int64_t>(app, "--checkpoint-every", phase + ".checkpoint_every",
                       "Checkpoint interval in steps (0: final step only)", ov);
}

void configure_logging(const std::string& level) {
  static const std::vector<std::string> kLevels{"trace", "debug", "info", "warn", "error", "off"};
  if (std::find(kLevels.begin(), kLevels.end(), level) == kLevels.end()) {
    throw litevsr::ConfigError(fmt::format(
        "unknown log level '{}' (trace, debug, info, warn, error, off)", level));
  }
  auto logger = spdlog::stderr_logger_st("litevsr");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate lightweight lip-reading models distilled from a speech "
               "recognizer's encoder.",
               "litevsr"};
  app.set_help_all_flag("--help-all", "Print help for every subcommand and exit");
  app.set_version_flag("--version", LITEVSR_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  Overrides overrides;
  Inputs in;
  app.add_option("--config", config_path, "TOML or JSON config file layered over the defaults");
  add_setting<uint64_t>(&app, "--seed", "seed", "Base random seed", overrides);
  app.add_flag_function(
      "--deterministic",
      [&](int64_t) { overrides.emplace_back("deterministic", true); },
      "Single-threaded, reproducible execution (also LITEVSR_DETERMINISTIC=1)");
  add_setting<std::string>(&app, "--log-level", "log_level",
                           "trace, debug, info, warn, error or off", overrides);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and a toy teacher model");
  add_setting<int>(synth, "--samples", "synth.samples", "Number of samples to generate",
                   overrides);

  auto* stats = app.add_subcommand("stats", "Compute audio-base feature normalization statistics");
  auto* crop = app.add_subcommand("crop", "Plan and apply mouth crops");
  add_crop_flags(crop, overrides);
  auto* pretrain = app.add_subcommand("pretrain", "Distill the audio base into the visual base");
  add_train_flags(pretrain, "pretrain", overrides);
  add_crop_flags(pretrain, overrides);
  auto* finetune = app.add_subcommand("finetune", "Fine-tune with CTC through the audio head");
  add_train_flags(finetune, "finetune", overrides);
  add_crop_flags(finetune, overrides);
  finetune->add_flag_function(
      "--train-head", [&](int64_t) { overrides.emplace_back("finetune.train_head", true); },
      "Also update the audio head");
  add_setting<double>(finetune, "--enc-weight", "finetune.enc_weight",
                      "Weight of the encoding loss term", overrides);
  auto* eval = app.add_subcommand("eval", "Decode a labeled manifest and score it");
  add_crop_flags(eval, overrides);
  auto* analyze = app.add_subcommand("analyze", "Correlate encoding loss with CTC loss and WER");
  analyze->add_option("--records", in.records, "Per-sample records.csv files from eval")
      ->expected(1, -1);
  auto* report = app.add_subcommand("report-features",
                                    "Per-feature mean, std and histograms of audio-base outputs");
  add_setting<int>(report, "--bins", "report.bins", "Histogram bins per feature", overrides);

  for (auto* sub : {stats, crop, pretrain, finetune, eval, report}) {
    sub->add_option("--manifest", in.manifest, "Sample manifest (JSON lines)");
  }
  for (auto* sub : {stats, pretrain, finetune, eval, report}) {
    sub->add_option("--teacher", in.teacher, "Pretrained acoustic model weights");
  }
  for (auto* sub : {pretrain, finetune, eval, report}) {
    sub->add_option("--stats", in.stats, "Normalization statistics from `stats`");
  }
  pretrain->add_option("--checkpoint", in.checkpoint,
                       "Training state to resume (.json) or visual weights to start from");
  finetune->add_option("--checkpoint", in.checkpoint,
                       "Pretrain or finetune training state (.json) or visual weights");
  eval->add_option("--checkpoint", in.checkpoint, "Visual weights or a training state (.json)");
  for (auto* sub : {finetune, eval}) {
    sub->add_option("--vocab", in.vocab, "Token inventory (default: characters)");
  }
  for (auto* sub : {synth, stats, crop, pretrain, finetune, eval, analyze, report}) {
    sub->add_option("--out-dir", in.out_dir, "Directory for all outputs");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    json settings = litevsr::cli::default_settings();
    if (!config_path.empty()) {
      litevsr::cli::merge_settings(settings, litevsr::cli::read_config_file(config_path));
    }
    for (auto& [key, value] : overrides) litevsr::cli::set_setting(settings, key, value);
    if (const char* env = std::getenv("LITEVSR_DETERMINISTIC"); env && std::string(env) == "1") {
      settings["deterministic"] = true;
    }
    if (settings["seed"].get<int64_t>() < 0) throw litevsr::ConfigError("seed must be >= 0");
    configure_logging(settings["log_level"]);
    if (settings["deterministic"].get<bool>()) {
      Eigen::setNbThreads(1);
      spdlog::debug("deterministic mode");
    }

    if (*synth) return litevsr::cli::run_synth(settings, in);
    if (*stats) return litevsr::cli::run_stats(settings, in);
    if (*crop) return litevsr::cli::run_crop(settings, in);
    if (*pretrain) return litevsr::cli::run_pretrain(settings, in);
    if (*finetune) return litevsr::cli::run_finetune(settings, in);
    if (*eval) return litevsr::cli::run_eval(settings, in);
    if (*analyze) return litevsr::cli::run_analyze(settings, in);
    if (*report) return litevsr::cli::run_report_features(settings, in);
  } catch (const litevsr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(litevsr::ErrorCategory::kData);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
