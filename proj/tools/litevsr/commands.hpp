#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

namespace litevsr::cli {

// Paths given on the command line. Which ones a subcommand needs is checked by
// the subcommand; a missing one is a data error naming the flag.
struct Inputs {
  std::filesystem::path manifest;
  std::filesystem::path teacher;
  std::filesystem::path stats;
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> records;
};

int run_synth(const nlohmann::json& settings, const Inputs& in);
int run_stats(const nlohmann::json& settings, const Inputs& in);
int run_crop(const nlohmann::json& settings, const Inputs& in);
int run_pretrain(const nlohmann::json& settings, const Inputs& in);
int run_finetune(const nlohmann::json& settings, const Inputs& in);
int run_eval(const nlohmann::json& settings, const Inputs& in);
int run_analyze(const nlohmann::json& settings, const Inputs& in);
int run_report_features(const nlohmann::json& settings, const Inputs& in);

}  // namespace litevsr::cli
