#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "litevsr/media.hpp"
#include "litevsr/nn/layers.hpp"
#include "litevsr/types.hpp"

namespace litevsr {

enum class Backbone { kToyCnn, kResNet18 };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& text);

struct VisualBaseConfig {
  int conv3d_stages = 2;          // 3x3x3 convs, spatial stride 2 each
  Backbone backbone = Backbone::kToyCnn;
  int conformer_layers = 2;
  int conformer_dim = 32;
  int output_dim = 32;            // must equal the audio base dim
  int input_size = 32;            // square crop side in pixels
  int temporal_stride_total = 1;
  int channels = 1;
  int frontend_channels = 8;
  // Per-stage widths; empty picks {16, 16, 32} for toy_cnn and
  // {64, 128, 256, 512} for resnet18.
  std::vector<int> backbone_channels;
  int num_heads = 4;
  int ff_mult = 4;
  int conv_kernel = 5;

  void validate() const;
  std::vector<int> stage_channels() const;
  int output_length(int frames) const { return frames / temporal_stride_total; }
};

void to_json(nlohmann::json& j, const VisualBaseConfig& cfg);
void from_json(const nlohmann::json& j, VisualBaseConfig& cfg);

// Visual encoder: 3D-conv front end, per-frame 2D backbone reduced to one
// vector per frame, linear map to conformer_dim, optional temporal pooling,
// Conformer stack and a final linear projection to output_dim.
class VisualBase {
 public:
  VisualBase(const VisualBaseConfig& cfg, uint64_t seed);

  const VisualBaseConfig& config() const { return cfg_; }

  // video [F, S, S, C] -> [floor(F / stride), output_dim]
  nn::Var forward(const nn::Var& video) const;
  nn::Var forward(const VideoTensor& video) const;

  // Parameter groups: "frontend.", "backbone.", "conformer.", "projection.".
  nn::ParameterList parameters() const;

  void save(const std::filesystem::path& path) const;
  static std::shared_ptr<VisualBase> load(const std::filesystem::path& path);

 private:
  struct ResBlock {
    nn::Conv3d conv1, conv2, shortcut;
    nn::LayerNorm norm1, norm2, shortcut_norm;
    bool has_shortcut = false;
  };

  nn::Var run_backbone(nn::Var h) const;

  VisualBaseConfig cfg_;
  std::vector<nn::Conv3d> frontend_;
  std::vector<nn::Conv3d> toy_blocks_;
  std::vector<ResBlock> res_blocks_;
  nn::Linear backbone_out_;
  std::vector<nn::ConformerBlock> conformer_;
  nn::Linear projection_;
};

nn::Var video_to_var(const VideoTensor& video);

// Runs each clip on its first lengths[n] frames (all frames when lengths is
// empty) and pads the outputs.
BatchedFeatures visual_base_forward(const VisualBase& model, std::span<const VideoTensor> videos,
                                    std::span<const int> lengths = {});

struct AlignResult {
  BatchedFeatures visual;
  BatchedFeatures audio;
  // Samples whose lengths differed by more than two frames before truncation.
  std::vector<int> mismatched;
};

// Truncates both sides of every sample to the shorter valid length.
AlignResult align_feature_lengths(const BatchedFeatures& visual, const BatchedFeatures& audio);

}  // namespace litevsr
