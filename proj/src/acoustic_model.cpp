#include "litevsr/acoustic_model.hpp"

#include <bit>

#include <fmt/format.h>

#include "litevsr/errors.hpp"
#include "litevsr/nn/weights.hpp"

namespace litevsr {

using nn::Var;
using nlohmann::json;

void AcousticModelConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("acoustic input_dim must be positive");
  if (model_dim <= 0) throw ConfigError("acoustic model_dim must be positive");
  if (num_conformer_layers < 0) throw ConfigError("num_conformer_layers must be >= 0");
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (split_layer < 0 || split_layer > num_conformer_layers) {
    throw ConfigError(fmt::format("split_layer {} outside [0, {}]", split_layer,
                                  num_conformer_layers));
  }
  if (subsampling_factor < 1 || !std::has_single_bit(static_cast<unsigned>(subsampling_factor))) {
    throw ConfigError("subsampling_factor must be a power of two");
  }
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError("model_dim must be divisible by num_heads");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (ff_mult < 1) throw ConfigError("ff_mult must be >= 1");
}

int AcousticModelConfig::output_length(int input_length) const {
  int t = input_length;
  for (int f = subsampling_factor; f > 1; f /= 2) t = (t + 1) / 2;
  return t;
}

void to_json(json& j, const AcousticModelConfig& c) {
  j = json{{"input_dim", c.input_dim},
           {"num_conformer_layers", c.num_conformer_layers},
           {"model_dim", c.model_dim},
           {"subsampling_factor", c.subsampling_factor},
           {"vocab_size", c.vocab_size},
           {"split_layer", c.split_layer},
           {"num_heads", c.num_heads},
           {"ff_mult", c.ff_mult},
           {"conv_kernel", c.conv_kernel}};
}

void from_json(const json& j, AcousticModelConfig& c) {
  AcousticModelConfig d;
  c.input_dim = j.value("input_dim", d.input_dim);
  c.num_conformer_layers = j.value("num_conformer_layers", d.num_conformer_layers);
  c.model_dim = j.value("model_dim", d.model_dim);
  c.subsampling_factor = j.value("subsampling_factor", d.subsampling_factor);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.split_layer = j.value("split_layer", d.split_layer);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.ff_mult = j.value("ff_mult", d.ff_mult);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
}

AcousticModel::AcousticModel(const AcousticModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int channels = cfg.input_dim;
  for (int f = cfg.subsampling_factor; f > 1; f /= 2) {
    // Strided conv over time: [T, 1, 1, C] -> [ceil(T/2), 1, 1, d].
    subsampling_convs_.emplace_back(channels, cfg.model_dim, std::array{3, 1, 1},
                                    nn::Conv3dGeometry{2, 1, 1, 1, 0, 0}, rng);
    channels = cfg.model_dim;
  }
  subsampling_out_ = nn::Linear(channels, cfg.model_dim, rng);
  const nn::ConformerConfig block{cfg.model_dim, cfg.num_heads, cfg.ff_mult, cfg.conv_kernel};
  for (int i = 0; i < cfg.num_conformer_layers; ++i) layers_.emplace_back(block, rng);
  decoder_ = nn::Linear(cfg.model_dim, cfg.num_classes(), rng);
}

Var AcousticModel::subsample(const Var& x) const {
  if (x.rank() != 2 || x.dim(1) != cfg_.input_dim) {
    throw DimensionError(fmt::format("acoustic input must be [T, {}], got {}", cfg_.input_dim,
                                     nn::shape_string(x.shape())));
  }
  if (x.dim(0) == 0) throw DataError("acoustic input has zero frames");
  Var h = x;
  if (!subsampling_convs_.empty()) {
    h = nn::reshape(h, {x.dim(0), 1, 1, x.dim(1)});
    for (const auto& conv : subsampling_convs_) h = nn::silu(conv(h));
    h = nn::reshape(h, {h.dim(0), h.dim(3)});
  }
  return subsampling_out_(h);
}

Var AcousticModel::run_layers(Var h, int begin, int end) const {
  for (int i = begin; i < end; ++i) h = layers_[i](h);
  return h;
}

Var AcousticModel::decode(const Var& h) const { return decoder_(h); }

Var AcousticModel::forward(const Var& x) const {
  return decode(run_layers(subsample(x), 0, num_layers()));
}

nn::ParameterList AcousticModel::subsampling_parameters() const {
  nn::ParameterList out;
  for (size_t i = 0; i < subsampling_convs_.size(); ++i) {
    subsampling_convs_[i].collect(out, fmt::format("subsampling.conv{}.", i));
  }
  subsampling_out_.collect(out, "subsampling.out.");
  return out;
}

nn::ParameterList AcousticModel::layer_parameters(int begin, int end) const {
  nn::ParameterList out;
  for (int i = begin; i < end; ++i) layers_[i].collect(out, fmt::format("layers.{}.", i));
  return out;
}

nn::ParameterList AcousticModel::decoder_parameters() const {
  nn::ParameterList out;
  decoder_.collect(out, "decoder.");
  return out;
}

nn::ParameterList AcousticModel::parameters() const {
  auto out = subsampling_parameters();
  auto layers = layer_parameters(0, num_layers());
  auto dec = decoder_parameters();
  out.insert(out.end(), layers.begin(), layers.end());
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

void AcousticModel::set_split_gain(std::vector<double> gain) {
  if (!gain.empty() && static_cast<int>(gain.size()) != cfg_.model_dim) {
    throw DimensionError("split gain must have model_dim entries");
  }
  for (double g : gain) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("split gain must be positive");
  }
  split_gain_ = std::move(gain);
}

void AcousticModel::save(const std::filesystem::path& path) const {
  json model{{"kind", "acoustic"}, {"config", cfg_}};
  auto file = nn::to_weights(parameters(), std::move(model));
  if (!split_gain_.empty()) {
    file.entries.push_back({"buffers.split_gain", {cfg_.model_dim}, nn::DType::kFloat64,
                            split_gain_});
  }
  nn::write_weights(path, file);
}

std::shared_ptr<AcousticModel> AcousticModel::load(const std::filesystem::path& path) {
  auto file = nn::read_weights(path);
  if (file.model.value("kind", "") != "acoustic" || !file.model.contains("config")) {
    throw DataError(fmt::format("{} is not an acoustic model checkpoint", path.string()));
  }
  auto model = std::make_shared<AcousticModel>(file.model["config"].get<AcousticModelConfig>(), 0);
  nn::load_parameters(model->parameters(), file);
  if (const auto* gain = file.find("buffers.split_gain")) model->set_split_gain(gain->data);
  return model;
}

std::shared_ptr<AcousticModel> build_acoustic_model(const AcousticModelConfig& cfg,
                                                    uint64_t seed) {
  return std::make_shared<AcousticModel>(cfg, seed);
}

Var AudioBase::forward(const Var& x) const {
  Var h = model_->run_layers(model_->subsample(x), 0, k_);
  const auto& gain = model_->split_gain();
  if (!gain.empty()) {
    const std::vector<double> zero(gain.size(), 0.0);
    h = nn::affine_columns(h, gain, zero);
  }
  return h;
}

nn::ParameterList AudioBase::parameters() const {
  auto out = model_->subsampling_parameters();
  auto layers = model_->layer_parameters(0, k_);
  out.insert(out.end(), layers.begin(), layers.end());
  return out;
}

Var AudioHead::forward(const Var& features) const {
  if (features.rank() != 2 || features.dim(1) != dim()) {
    throw DimensionError(fmt::format("audio head expects [T, {}], got {}", dim(),
                                     nn::shape_string(features.shape())));
  }
  Var h = features;
  const auto& gain = model_->split_gain();
  if (!gain.empty()) {
    std::vector<double> inv(gain.size());
    for (size_t i = 0; i < gain.size(); ++i) inv[i] = 1.0 / gain[i];
    h = nn::affine_columns(h, inv, std::vector<double>(gain.size(), 0.0));
  }
  return model_->decode(model_->run_layers(h, k_, model_->num_layers()));
}

nn::ParameterList AudioHead::parameters() const {
  auto out = model_->layer_parameters(k_, model_->num_layers());
  auto dec = model_->decoder_parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

AcousticSplit split_model(std::shared_ptr<const AcousticModel> model, int k) {
  if (k < 0 || k > model->num_layers()) {
    throw ConfigError(fmt::format("split layer {} outside [0, {}]", k, model->num_layers()));
  }
  return AcousticSplit{model, k, AudioBase(model, k), AudioHead(model, k)};
}

namespace {

template <typename Fn>
BatchedFeatures map_sequences(const BatchedFeatures& input, std::span<const int> lengths,
                              int out_dim, Fn fn) {
  if (input.batch() == 0) throw DataError("empty batch");
  if (static_cast<int>(lengths.size()) != input.batch()) {
    throw DimensionError(fmt::format("length vector has {} entries for batch of {}",
                                     lengths.size(), input.batch()));
  }
  std::vector<Matrix> outputs;
  outputs.reserve(input.batch());
  nn::NoGradGuard no_grad;
  for (int n = 0; n < input.batch(); ++n) {
    if (lengths[n] <= 0) throw DataError(fmt::format("sample {} has zero length", n));
    if (lengths[n] > input.max_frames()) {
      throw DimensionError(fmt::format("sample {} length {} exceeds T_max {}", n, lengths[n],
                                       input.max_frames()));
    }
    Matrix x(lengths[n], input.dim());
    std::copy_n(input.frame(n, 0), x.size(), x.data());
    Matrix y = nn::to_matrix(fn(nn::from_matrix(x)));
    if (y.cols() != out_dim) throw DimensionError("unexpected output dimension");
    outputs.push_back(std::move(y));
  }
  return pad_batch(std::span<const Matrix>(outputs));
}

}  // namespace

BatchedFeatures audio_base_forward(const AudioBase& base, const BatchedFeatures& input,
                                   std::span<const int> lengths) {
  if (input.dim() != base.input_dim()) {
    throw DimensionError(fmt::format("audio base expects {} input features, got {}",
                                     base.input_dim(), input.dim()));
  }
  return map_sequences(input, lengths, base.dim(),
                       [&](const Var& x) { return base.forward(x); });
}

BatchedFeatures audio_base_forward(const AudioBase& base, const BatchedFeatures& input) {
  return audio_base_forward(base, input, input.lengths());
}

BatchedFeatures audio_head_forward(const AudioHead& head, const BatchedFeatures& features) {
  if (features.dim() != head.dim()) {
    throw DimensionError(fmt::format("audio head expects {} features, got {}", head.dim(),
                                     features.dim()));
  }
  return map_sequences(features, features.lengths(), head.num_classes(),
                       [&](const Var& x) { return head.forward(x); });
}

}  // namespace litevsr
