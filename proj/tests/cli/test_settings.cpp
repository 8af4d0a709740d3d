#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "litevsr/errors.hpp"
#include "settings.hpp"

namespace litevsr::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const fs::path kConfigs = LITEVSR_CONFIG_DIR;

json layered(const fs::path& file) {
  json s = default_settings();
  merge_settings(s, read_config_file(file));
  return s;
}

TEST(Settings, DefaultsBuildValidConfigs) {
  const json s = default_settings();
  EXPECT_NO_THROW(synth_config(s));
  EXPECT_NO_THROW(teacher_config(s));
  EXPECT_NO_THROW(crop_config(s));
  EXPECT_NO_THROW(visual_config(s, 32));
  EXPECT_NO_THROW(train_config(s, "pretrain"));
  EXPECT_NO_THROW(train_config(s, "finetune"));
}

TEST(Settings, ToyPresetSpellsOutTheDefaults) {
  EXPECT_EQ(layered(kConfigs / "toy.toml"), default_settings());
}

TEST(Settings, FullScalePresetHyperparameters) {
  const json s = layered(kConfigs / "paper.toml");
  const auto pre = train_config(s, "pretrain");
  const auto ft = train_config(s, "finetune");
  EXPECT_EQ(pre.schedule.warmup_steps, 50000);
  EXPECT_EQ(pre.schedule.peak_lr, 8e-4);
  EXPECT_EQ(ft.schedule.warmup_steps, 10000);
  EXPECT_EQ(ft.schedule.peak_lr, 1e-4);
  for (const auto* c : {&pre, &ft}) {
    EXPECT_EQ(c->optimizer.batch_size, 64);
    EXPECT_EQ(c->optimizer.beta1, 0.9);
    EXPECT_EQ(c->optimizer.beta2, 0.98);
    EXPECT_EQ(c->optimizer.epsilon, 1e-9);
  }
  const auto v = visual_config(s, 176);
  EXPECT_EQ(v.conv3d_stages, 2);
  EXPECT_EQ(v.backbone, Backbone::kResNet18);
  EXPECT_EQ(v.conformer_layers, 12);
  EXPECT_EQ(v.conformer_dim, 256);
  EXPECT_EQ(v.input_size, 88);
  const auto t = teacher_config(s);
  EXPECT_EQ(t.model.num_conformer_layers, 17);
  EXPECT_EQ(t.model.split_layer, 8);
}

TEST(Settings, FlagsOverrideConfigFile) {
  json s = layered(kConfigs / "paper.toml");
  set_setting(s, "pretrain.peak_lr", 1e-3);
  set_setting(s, "crop.out_size", 96);
  set_setting(s, "finetune.train_head", true);
  EXPECT_EQ(train_config(s, "pretrain").schedule.peak_lr, 1e-3);
  EXPECT_EQ(train_config(s, "pretrain").schedule.warmup_steps, 50000);
  EXPECT_EQ(crop_config(s).out_size, 96);
  EXPECT_TRUE(train_config(s, "finetune").loss.train_head);
}

TEST(Settings, RejectsUnknownKeysAndWrongTypes) {
  json s = default_settings();
  EXPECT_THROW(merge_settings(s, json{{"pretrain", {{"peek_lr", 1.0}}}}), ConfigError);
  EXPECT_THROW(merge_settings(s, json{{"nonsense", 1}}), ConfigError);
  EXPECT_THROW(merge_settings(s, json{{"pretrain", {{"steps", 1.5}}}}), ConfigError);
  EXPECT_THROW(merge_settings(s, json{{"pretrain", 3}}), ConfigError);
  EXPECT_THROW(merge_settings(s, json{{"visual", {{"backbone_channels", {1.5}}}}}), ConfigError);
  EXPECT_THROW(set_setting(s, "crop.mode", 3), ConfigError);
  // Integers are accepted where reals are expected.
  EXPECT_NO_THROW(merge_settings(s, json{{"pretrain", {{"peak_lr", 1}}}}));
  EXPECT_EQ(s, [] {
    json d = default_settings();
    d["pretrain"]["peak_lr"] = 1;
    return d;
  }());
}

TEST(Settings, InvalidValuesFailValidation) {
  json s = default_settings();
  set_setting(s, "crop.mode", "wobbly");
  EXPECT_THROW(crop_config(s), ConfigError);
  s = default_settings();
  set_setting(s, "pretrain.warmup", 0);
  EXPECT_THROW(train_config(s, "pretrain"), ConfigError);
}

TEST(Settings, MalformedFilesAreConfigErrors) {
  const fs::path dir = fs::temp_directory_path() / "litevsr_settings_test";
  fs::create_directories(dir);
  std::ofstream(dir / "bad.toml") << "[pretrain\nsteps = 3\n";
  std::ofstream(dir / "bad.json") << "{\"pretrain\": ";
  EXPECT_THROW(read_config_file(dir / "bad.toml"), ConfigError);
  EXPECT_THROW(read_config_file(dir / "bad.json"), ConfigError);
  EXPECT_THROW(read_config_file(dir / "missing.toml"), ConfigError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace litevsr::cli
