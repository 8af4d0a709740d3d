#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "litevsr/nn/layers.hpp"
#include "litevsr/types.hpp"

namespace litevsr {

struct AcousticModelConfig {
  int input_dim = 16;             // front-end feature size per frame
  int num_conformer_layers = 4;
  int model_dim = 32;
  int subsampling_factor = 1;     // power of two; one strided conv per factor of 2
  int vocab_size = 29;            // tokens, blank excluded
  int split_layer = 2;
  int num_heads = 4;
  int ff_mult = 4;
  int conv_kernel = 5;

  void validate() const;
  int num_classes() const { return vocab_size + 1; }
  int output_length(int input_length) const;
};

void to_json(nlohmann::json& j, const AcousticModelConfig& cfg);
void from_json(const nlohmann::json& j, AcousticModelConfig& cfg);

// CTC acoustic model: convolutional subsampling, a Conformer stack and a
// linear decoder to vocab_size + 1 logits (blank = vocab_size).
class AcousticModel {
 public:
  AcousticModel(const AcousticModelConfig& cfg, uint64_t seed);

  const AcousticModelConfig& config() const { return cfg_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  // x [T, input_dim] -> logits [T', vocab_size + 1]
  nn::Var forward(const nn::Var& x) const;

  nn::Var subsample(const nn::Var& x) const;
  // Conformer layers [begin, end), zero-based.
  nn::Var run_layers(nn::Var h, int begin, int end) const;
  nn::Var decode(const nn::Var& h) const;

  nn::ParameterList parameters() const;
  nn::ParameterList subsampling_parameters() const;
  nn::ParameterList layer_parameters(int begin, int end) const;
  nn::ParameterList decoder_parameters() const;

  // Optional fixed per-feature gain on the split boundary: the base output is
  // multiplied by it and the head input divided by it, so the composed model
  // is unchanged. Empty means unit gain. Not a trainable parameter.
  const std::vector<double>& split_gain() const { return split_gain_; }
  void set_split_gain(std::vector<double> gain);

  void save(const std::filesystem::path& path) const;
  static std::shared_ptr<AcousticModel> load(const std::filesystem::path& path);

 private:
  AcousticModelConfig cfg_;
  std::vector<nn::Conv3d> subsampling_convs_;
  nn::Linear subsampling_out_;
  std::vector<nn::ConformerBlock> layers_;
  nn::Linear decoder_;
  std::vector<double> split_gain_;
};

std::shared_ptr<AcousticModel> build_acoustic_model(const AcousticModelConfig& cfg,
                                                    uint64_t seed);

// Audio base: subsampling plus Conformer layers 1..k.
class AudioBase {
 public:
  AudioBase(std::shared_ptr<const AcousticModel> model, int split_layer)
      : model_(std::move(model)), k_(split_layer) {}

  nn::Var forward(const nn::Var& x) const;
  nn::ParameterList parameters() const;
  int dim() const { return model_->config().model_dim; }
  int input_dim() const { return model_->config().input_dim; }
  int output_length(int input_length) const { return model_->config().output_length(input_length); }

 private:
  std::shared_ptr<const AcousticModel> model_;
  int k_;
};

// Audio head: Conformer layers k+1..L plus the linear decoder.
class AudioHead {
 public:
  AudioHead(std::shared_ptr<const AcousticModel> model, int split_layer)
      : model_(std::move(model)), k_(split_layer) {}

  nn::Var forward(const nn::Var& features) const;
  nn::ParameterList parameters() const;
  int dim() const { return model_->config().model_dim; }
  int num_classes() const { return model_->config().num_classes(); }
  int blank_id() const { return model_->config().vocab_size; }

 private:
  std::shared_ptr<const AcousticModel> model_;
  int k_;
};

struct AcousticSplit {
  std::shared_ptr<const AcousticModel> model;
  int split_layer = 0;
  AudioBase base;
  AudioHead head;
};

// Splits after Conformer block k (complete block, including its final norm).
AcousticSplit split_model(std::shared_ptr<const AcousticModel> model, int k);

// Batched forwards. Each sequence runs independently on its valid frames, so
// batch composition never changes a sample's result.
BatchedFeatures audio_base_forward(const AudioBase& base, const BatchedFeatures& input);
BatchedFeatures audio_base_forward(const AudioBase& base, const BatchedFeatures& input,
                                   std::span<const int> lengths);
BatchedFeatures audio_head_forward(const AudioHead& head, const BatchedFeatures& features);

}  // namespace litevsr
