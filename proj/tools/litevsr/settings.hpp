#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "litevsr/crop.hpp"
#include "litevsr/synth.hpp"
#include "litevsr/training.hpp"
#include "litevsr/visual_base.hpp"

namespace litevsr::cli {

// Effective configuration as a JSON tree. Every key that may appear in a config
// file is present in default_settings(); anything else is rejected.
nlohmann::json default_settings();

// Reads a TOML (.toml) or JSON (any other extension) config file.
nlohmann::json read_config_file(const std::filesystem::path& path);

// Overlays `overlay` onto `base`, rejecting unknown keys and type mismatches
// with ConfigError. `where` prefixes key paths in messages.
void merge_settings(nlohmann::json& base, const nlohmann::json& overlay,
                    const std::string& where = "");

// Sets a dotted key ("pretrain.peak_lr") with the same checks as a config file.
void set_setting(nlohmann::json& settings, const std::string& dotted_key, nlohmann::json value);

SynthConfig synth_config(const nlohmann::json& s);
int synth_samples(const nlohmann::json& s);
std::array<double, 3> synth_split(const nlohmann::json& s);
TeacherConfig teacher_config(const nlohmann::json& s);
CropConfig crop_config(const nlohmann::json& s);
// output_dim and input_size come from the teacher and the crop size.
VisualBaseConfig visual_config(const nlohmann::json& s, int output_dim);
// phase: "pretrain" or "finetune".
TrainConfig train_config(const nlohmann::json& s, const std::string& phase);

}  // namespace litevsr::cli
