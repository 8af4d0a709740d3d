#include "litevsr/visual_base.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "litevsr/errors.hpp"
#include "litevsr/nn/weights.hpp"

namespace litevsr {

using nlohmann::json;
using nn::Var;

std::string to_string(Backbone b) { return b == Backbone::kResNet18 ? "resnet18" : "toy_cnn"; }

Backbone backbone_from_string(const std::string& text) {
  if (text == "toy_cnn") return Backbone::kToyCnn;
  if (text == "resnet18") return Backbone::kResNet18;
  throw ConfigError(fmt::format("unknown backbone '{}' (toy_cnn, resnet18)", text));
}

void VisualBaseConfig::validate() const {
  if (conv3d_stages < 0) throw ConfigError("conv3d_stages must be >= 0");
  if (conformer_layers < 0) throw ConfigError("conformer_layers must be >= 0");
  if (conformer_dim <= 0 || output_dim <= 0) throw ConfigError("visual dims must be positive");
  if (input_size < 1) throw ConfigError("input_size must be positive");
  if (temporal_stride_total < 1) throw ConfigError("temporal_stride_total must be >= 1");
  if (channels < 1 || frontend_channels < 1) throw ConfigError("channel counts must be positive");
  if (num_heads < 1 || conformer_dim % num_heads != 0) {
    throw ConfigError("conformer_dim must be divisible by num_heads");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (ff_mult < 1) throw ConfigError("ff_mult must be >= 1");
  for (int c : backbone_channels) {
    if (c < 1) throw ConfigError("backbone channels must be positive");
  }
}

std::vector<int> VisualBaseConfig::stage_channels() const {
  if (!backbone_channels.empty()) return backbone_channels;
  if (backbone == Backbone::kResNet18) return {64, 128, 256, 512};
  return {16, 16, 32};
}

void to_json(json& j, const VisualBaseConfig& c) {
  j = json{{"conv3d_stages", c.conv3d_stages},
           {"backbone", to_string(c.backbone)},
           {"conformer_layers", c.conformer_layers},
           {"conformer_dim", c.conformer_dim},
           {"output_dim", c.output_dim},
           {"input_size", c.input_size},
           {"temporal_stride_total", c.temporal_stride_total},
           {"channels", c.channels},
           {"frontend_channels", c.frontend_channels},
           {"backbone_channels", c.backbone_channels},
           {"num_heads", c.num_heads},
           {"ff_mult", c.ff_mult},
           {"conv_kernel", c.conv_kernel}};
}

void from_json(const json& j, VisualBaseConfig& c) {
  const VisualBaseConfig d;
  c.conv3d_stages = j.value("conv3d_stages", d.conv3d_stages);
  c.backbone = backbone_from_string(j.value("backbone", to_string(d.backbone)));
  c.conformer_layers = j.value("conformer_layers", d.conformer_layers);
  c.conformer_dim = j.value("conformer_dim", d.conformer_dim);
  c.output_dim = j.value("output_dim", d.output_dim);
  c.input_size = j.value("input_size", d.input_size);
  c.temporal_stride_total = j.value("temporal_stride_total", d.temporal_stride_total);
  c.channels = j.value("channels", d.channels);
  c.frontend_channels = j.value("frontend_channels", d.frontend_channels);
  c.backbone_channels = j.value("backbone_channels", d.backbone_channels);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.ff_mult = j.value("ff_mult", d.ff_mult);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
}

namespace {

nn::Conv3d conv2d(int in, int out, int k, int stride, Rng& rng) {
  return nn::Conv3d(in, out, {1, k, k}, nn::Conv3dGeometry{1, stride, stride, 0, k / 2, k / 2},
                    rng);
}

}  // namespace

VisualBase::VisualBase(const VisualBaseConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int c = cfg.channels;
  for (int i = 0; i < cfg.conv3d_stages; ++i) {
    frontend_.emplace_back(c, cfg.frontend_channels, std::array{3, 3, 3},
                           nn::Conv3dGeometry{1, 2, 2, 1, 1, 1}, rng);
    c = cfg.frontend_channels;
  }
  const auto widths = cfg_.stage_channels();
  if (cfg.backbone == Backbone::kToyCnn) {
    for (size_t i = 0; i < widths.size(); ++i) {
      toy_blocks_.push_back(conv2d(c, widths[i], 3, i == 0 ? 1 : 2, rng));
      c = widths[i];
    }
  } else {
    for (size_t stage = 0; stage < widths.size(); ++stage) {
      for (int b = 0; b < 2; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        ResBlock blk;
        blk.conv1 = conv2d(c, widths[stage], 3, stride, rng);
        blk.norm1 = nn::LayerNorm(widths[stage]);
        blk.conv2 = conv2d(widths[stage], widths[stage], 3, 1, rng);
        blk.norm2 = nn::LayerNorm(widths[stage]);
        if (stride != 1 || c != widths[stage]) {
          blk.has_shortcut = true;
          blk.shortcut = conv2d(c, widths[stage], 1, stride, rng);
          blk.shortcut_norm = nn::LayerNorm(widths[stage]);
        }
        res_blocks_.push_back(std::move(blk));
        c = widths[stage];
      }
    }
  }
  backbone_out_ = nn::Linear(c, cfg.conformer_dim, rng);
  const nn::ConformerConfig block{cfg.conformer_dim, cfg.num_heads, cfg.ff_mult, cfg.conv_kernel};
  for (int i = 0; i < cfg.conformer_layers; ++i) conformer_.emplace_back(block, rng);
  projection_ = nn::Linear(cfg.conformer_dim, cfg.output_dim, rng);
}

Var VisualBase::run_backbone(Var h) const {
  for (const auto& conv : toy_blocks_) h = nn::silu(conv(h));
  for (const auto& blk : res_blocks_) {
    Var y = nn::silu(blk.norm1(blk.conv1(h)));
    y = blk.norm2(blk.conv2(y));
    Var skip = blk.has_shortcut ? blk.shortcut_norm(blk.shortcut(h)) : h;
    h = nn::silu(nn::add(y, skip));
  }
  return h;
}

Var VisualBase::forward(const Var& video) const {
  if (video.rank() != 4) {
    throw DimensionError(fmt::format("visual base expects [F, S, S, C], got {}",
                                     nn::shape_string(video.shape())));
  }
  if (video.dim(1) != cfg_.input_size || video.dim(2) != cfg_.input_size ||
      video.dim(3) != cfg_.channels) {
    throw DimensionError(fmt::format("visual base expects frames of {}x{}x{}, got {}",
                                     cfg_.input_size, cfg_.input_size, cfg_.channels,
                                     nn::shape_string(video.shape())));
  }
  if (cfg_.output_length(video.dim(0)) == 0) {
    throw DataError(fmt::format("clip of {} frames is shorter than the temporal stride {}",
                                video.dim(0), cfg_.temporal_stride_total));
  }
  Var h = video;
  for (const auto& conv : frontend_) h = nn::silu(conv(h));
  h = run_backbone(h);
  h = backbone_out_(nn::spatial_mean(h));
  h = nn::temporal_mean_pool(h, cfg_.temporal_stride_total);
  for (const auto& block : conformer_) h = block(h);
  return projection_(h);
}

Var VisualBase::forward(const VideoTensor& video) const { return forward(video_to_var(video)); }

nn::ParameterList VisualBase::parameters() const {
  nn::ParameterList out;
  for (size_t i = 0; i < frontend_.size(); ++i) frontend_[i].collect(out, fmt::format("frontend.conv{}.", i));
  for (size_t i = 0; i < toy_blocks_.size(); ++i) {
    toy_blocks_[i].collect(out, fmt::format("backbone.block{}.", i));
  }
  for (size_t i = 0; i < res_blocks_.size(); ++i) {
    const auto& blk = res_blocks_[i];
    const auto prefix = fmt::format("backbone.res{}.", i);
    blk.conv1.collect(out, prefix + "conv1.");
    blk.norm1.collect(out, prefix + "norm1.");
    blk.conv2.collect(out, prefix + "conv2.");
    blk.norm2.collect(out, prefix + "norm2.");
    if (blk.has_shortcut) {
      blk.shortcut.collect(out, prefix + "shortcut.");
      blk.shortcut_norm.collect(out, prefix + "shortcut_norm.");
    }
  }
  backbone_out_.collect(out, "backbone.out.");
  for (size_t i = 0; i < conformer_.size(); ++i) {
    conformer_[i].collect(out, fmt::format("conformer.{}.", i));
  }
  projection_.collect(out, "projection.");
  return out;
}

void VisualBase::save(const std::filesystem::path& path) const {
  nn::write_weights(path, nn::to_weights(parameters(), json{{"kind", "visual"}, {"config", cfg_}}));
}

std::shared_ptr<VisualBase> VisualBase::load(const std::filesystem::path& path) {
  const auto file = nn::read_weights(path);
  if (file.model.value("kind", "") != "visual" || !file.model.contains("config")) {
    throw DataError(fmt::format("{} is not a visual base checkpoint", path.string()));
  }
  auto model = std::make_shared<VisualBase>(file.model["config"].get<VisualBaseConfig>(), 0);
  nn::load_parameters(model->parameters(), file);
  return model;
}

Var video_to_var(const VideoTensor& video) {
  return Var::constant({video.frames, video.height, video.width, video.channels}, video.data);
}

BatchedFeatures visual_base_forward(const VisualBase& model, std::span<const VideoTensor> videos,
                                    std::span<const int> lengths) {
  if (videos.empty()) throw DataError("empty video batch");
  if (!lengths.empty() && lengths.size() != videos.size()) {
    throw DimensionError(fmt::format("{} lengths for {} videos", lengths.size(), videos.size()));
  }
  nn::NoGradGuard no_grad;
  std::vector<Matrix> outputs;
  outputs.reserve(videos.size());
  for (size_t n = 0; n < videos.size(); ++n) {
    const VideoTensor& v = videos[n];
    const int len = lengths.empty() ? v.frames : lengths[n];
    if (len < 1 || len > v.frames) {
      throw DataError(fmt::format("video {} length {} outside [1, {}]", n, len, v.frames));
    }
    std::vector<double> data(v.data.begin(),
                             v.data.begin() + static_cast<std::ptrdiff_t>(len * v.frame_size()));
    const Var x = Var::constant({len, v.height, v.width, v.channels}, std::move(data));
    outputs.push_back(nn::to_matrix(model.forward(x)));
  }
  return pad_batch(std::span<const Matrix>(outputs));
}

AlignResult align_feature_lengths(const BatchedFeatures& visual, const BatchedFeatures& audio) {
  if (visual.batch() != audio.batch()) {
    throw DimensionError(fmt::format("visual batch {} vs audio batch {}", visual.batch(),
                                     audio.batch()));
  }
  AlignResult r;
  std::vector<int> lengths(visual.batch());
  int max_len = 0;
  for (int n = 0; n < visual.batch(); ++n) {
    const int lv = visual.lengths()[n];
    const int la = audio.lengths()[n];
    if (std::abs(lv - la) > 2) {
      r.mismatched.push_back(n);
      spdlog::warn("sample {}: visual length {} vs audio length {}, truncating to {}", n, lv, la,
                   std::min(lv, la));
    }
    lengths[n] = std::min(lv, la);
    max_len = std::max(max_len, lengths[n]);
  }
  auto truncate = [&](const BatchedFeatures& src) {
    BatchedFeatures out(src.batch(), max_len, src.dim());
    out.lengths() = lengths;
    for (int n = 0; n < src.batch(); ++n) {
      std::copy_n(src.frame(n, 0), static_cast<size_t>(lengths[n]) * src.dim(), out.frame(n, 0));
    }
    return out;
  };
  r.visual = truncate(visual);
  r.audio = truncate(audio);
  return r;
}

}  // namespace litevsr
