#include "settings.hpp"

#include <fstream>

#include <fmt/format.h>
#include <tomlplusplus/toml.hpp>

#include "litevsr/errors.hpp"
#include "litevsr/rng.hpp"

namespace litevsr::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

json default_settings() {
  const SynthConfig sc;
  const TeacherConfig tc;
  const VisualBaseConfig vc;
  const OptimizerConfig oc;
  const CropConfig cc;
  json adam{{"beta1", oc.beta1}, {"beta2", oc.beta2}, {"epsilon", oc.epsilon}};
  auto phase = [&](int64_t warmup, double peak, int64_t steps, int64_t every) {
    json p{{"warmup", warmup},
           {"peak_lr", peak},
           {"steps", steps},
           {"batch_size", oc.batch_size},
           {"clip_norm", oc.clip_norm},
           {"checkpoint_every", every},
           {"augment_shift", 0.0},
           {"augment_width_jitter", 0.0}};
    p.update(adam);
    return p;
  };
  json finetune = phase(50, 5e-4, 300, 100);
  finetune["ctc_weight"] = 1.0;
  finetune["enc_weight"] = 0.0;
  finetune["train_head"] = false;
  return json{
      {"seed", 0},
      {"deterministic", false},
      {"log_level", "info"},
      {"synth",
       {{"samples", 600},
        {"split", {0.7, 0.2, 0.1}},
        {"num_symbols", sc.num_symbols},
        {"frames_per_symbol", sc.frames_per_symbol},
        {"image_size", sc.image_size},
        {"audio_dim", sc.audio_dim},
        {"noise_level", sc.noise_level},
        {"pixel_noise", sc.pixel_noise},
        {"illumination_jitter", sc.illumination_jitter},
        {"aspect_jitter", sc.aspect_jitter},
        {"min_symbols", sc.min_symbols},
        {"max_symbols", sc.max_symbols},
        {"fps", sc.fps}}},
      {"teacher",
       {{"num_conformer_layers", tc.model.num_conformer_layers},
        {"model_dim", tc.model.model_dim},
        {"subsampling_factor", tc.model.subsampling_factor},
        {"split_layer", tc.model.split_layer},
        {"num_heads", tc.model.num_heads},
        {"ff_mult", tc.model.ff_mult},
        {"conv_kernel", tc.model.conv_kernel},
        {"train_samples", tc.num_samples},
        {"steps", 800},
        {"batch_size", tc.batch_size},
        {"peak_lr", tc.peak_lr},
        {"warmup", tc.warmup_steps}}},
      {"crop",
       {{"mode", to_string(cc.mode)},
        {"sigma", cc.gaussian_sigma},
        {"width_scale", cc.width_scale},
        {"out_size", sc.crop_size},
        {"grayscale", cc.grayscale}}},
      {"visual",
       {{"conv3d_stages", vc.conv3d_stages},
        {"backbone", to_string(vc.backbone)},
        {"conformer_layers", vc.conformer_layers},
        {"conformer_dim", vc.conformer_dim},
        {"temporal_stride_total", vc.temporal_stride_total},
        {"frontend_channels", vc.frontend_channels},
        {"backbone_channels", json::array()},
        {"num_heads", vc.num_heads},
        {"ff_mult", vc.ff_mult},
        {"conv_kernel", vc.conv_kernel}}},
      {"pretrain", phase(100, 2e-3, 1000, 125)},
      {"finetune", finetune},
      {"stats", {{"sigma_floor", kDefaultSigmaFloor}}},
      {"report", {{"bins", 30}}},
  };
}

namespace {

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("unsupported TOML value type (dates and times are not accepted)");
}

bool is_int(const json& v) { return v.is_number_integer(); }

bool compatible(const json& base, const json& value) {
  if (base.is_boolean()) return value.is_boolean();
  if (base.is_string()) return value.is_string();
  if (is_int(base)) return is_int(value);
  if (base.is_number_float()) return value.is_number();
  if (base.is_array()) {
    if (!value.is_array()) return false;
    for (const auto& e : value) {
      if (base.empty() ? !is_int(e) : !compatible(base.front(), e)) return false;
    }
    return true;
  }
  return false;
}

std::string type_name(const json& v) {
  if (is_int(v)) return "integer";
  if (v.is_number_float()) return "number";
  if (v.is_array()) return "array";
  return v.type_name();
}

}  // namespace

json read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  if (path.extension() == ".toml") {
    try {
      return toml_to_json(toml::parse(in, path.string()));
    } catch (const toml::parse_error& e) {
      const auto& src = e.source();
      throw ConfigError(fmt::format("{}:{}:{}: {}", path.string(), src.begin.line,
                                    src.begin.column, e.description()));
    }
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void merge_settings(json& base, const json& overlay, const std::string& where) {
  if (!overlay.is_object()) {
    throw ConfigError(fmt::format("config {} must be a table", where.empty() ? "root" : where));
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", path));
    json& slot = base[key];
    if (slot.is_object()) {
      merge_settings(slot, value, path);
    } else if (!compatible(slot, value)) {
      throw ConfigError(fmt::format("config key '{}' expects {}, got {}", path, type_name(slot),
                                    type_name(value)));
    } else {
      slot = value;
    }
  }
}

void set_setting(json& settings, const std::string& dotted_key, json value) {
  json overlay = std::move(value);
  std::string rest = dotted_key;
  for (auto pos = rest.rfind('.'); pos != std::string::npos; pos = rest.rfind('.')) {
    overlay = json{{rest.substr(pos + 1), std::move(overlay)}};
    rest.resize(pos);
  }
  merge_settings(settings, json{{rest, std::move(overlay)}});
}

SynthConfig synth_config(const json& s) {
  const auto& j = s.at("synth");
  SynthConfig c;
  c.num_symbols = j.at("num_symbols");
  c.frames_per_symbol = j.at("frames_per_symbol");
  c.image_size = j.at("image_size");
  c.crop_size = s.at("crop").at("out_size");
  c.audio_dim = j.at("audio_dim");
  c.noise_level = j.at("noise_level");
  c.pixel_noise = j.at("pixel_noise");
  c.illumination_jitter = j.at("illumination_jitter");
  c.aspect_jitter = j.at("aspect_jitter");
  c.min_symbols = j.at("min_symbols");
  c.max_symbols = j.at("max_symbols");
  c.fps = j.at("fps");
  c.seed = s.at("seed");
  c.validate();
  return c;
}

int synth_samples(const json& s) {
  const int n = s.at("synth").at("samples");
  if (n < 3) throw ConfigError("synth.samples must be >= 3");
  return n;
}

std::array<double, 3> synth_split(const json& s) {
  const auto& a = s.at("synth").at("split");
  if (a.size() != 3) throw ConfigError("synth.split needs three ratios");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

TeacherConfig teacher_config(const json& s) {
  const auto& j = s.at("teacher");
  TeacherConfig c;
  c.model.num_conformer_layers = j.at("num_conformer_layers");
  c.model.model_dim = j.at("model_dim");
  c.model.subsampling_factor = j.at("subsampling_factor");
  c.model.split_layer = j.at("split_layer");
  c.model.num_heads = j.at("num_heads");
  c.model.ff_mult = j.at("ff_mult");
  c.model.conv_kernel = j.at("conv_kernel");
  c.num_samples = j.at("train_samples");
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.peak_lr = j.at("peak_lr");
  c.warmup_steps = j.at("warmup");
  c.seed = derive_seed(s.at("seed").get<uint64_t>(), 1);
  return c;
}

CropConfig crop_config(const json& s) {
  const auto& j = s.at("crop");
  CropConfig c;
  c.mode = crop_mode_from_string(j.at("mode"));
  c.gaussian_sigma = j.at("sigma");
  c.width_scale = j.at("width_scale");
  c.out_size = j.at("out_size");
  c.grayscale = j.at("grayscale");
  c.validate();
  return c;
}

VisualBaseConfig visual_config(const json& s, int output_dim) {
  const auto& j = s.at("visual");
  VisualBaseConfig c;
  c.conv3d_stages = j.at("conv3d_stages");
  c.backbone = backbone_from_string(j.at("backbone"));
  c.conformer_layers = j.at("conformer_layers");
  c.conformer_dim = j.at("conformer_dim");
  c.temporal_stride_total = j.at("temporal_stride_total");
  c.frontend_channels = j.at("frontend_channels");
  c.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  c.num_heads = j.at("num_heads");
  c.ff_mult = j.at("ff_mult");
  c.conv_kernel = j.at("conv_kernel");
  c.output_dim = output_dim;
  c.input_size = s.at("crop").at("out_size");
  c.channels = s.at("crop").at("grayscale").get<bool>() ? 1 : 3;
  c.validate();
  return c;
}

TrainConfig train_config(const json& s, const std::string& phase) {
  const auto& j = s.at(phase);
  TrainConfig c;
  c.schedule.warmup_steps = j.at("warmup");
  c.schedule.peak_lr = j.at("peak_lr");
  c.optimizer.beta1 = j.at("beta1");
  c.optimizer.beta2 = j.at("beta2");
  c.optimizer.epsilon = j.at("epsilon");
  c.optimizer.batch_size = j.at("batch_size");
  c.optimizer.clip_norm = j.at("clip_norm");
  c.steps = j.at("steps");
  c.checkpoint_every = j.at("checkpoint_every");
  c.seed = derive_seed(s.at("seed").get<uint64_t>(), phase == "pretrain" ? 2 : 3);
  const double shift = j.at("augment_shift");
  const double jitter = j.at("augment_width_jitter");
  if (shift > 0.0 || jitter > 0.0) c.augment = AugmentConfig{shift, jitter, 0};
  c.crop = crop_config(s);
  if (phase == "finetune") {
    c.loss.ctc_weight = j.at("ctc_weight");
    c.loss.enc_weight = j.at("enc_weight");
    c.loss.train_head = j.at("train_head");
  }
  c.schedule.validate();
  c.optimizer.validate();
  c.loss.validate();
  if (c.augment) c.augment->validate();
  return c;
}

}  // namespace litevsr::cli
