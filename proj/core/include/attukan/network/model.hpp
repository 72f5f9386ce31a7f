#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attukan/kan/blocks.hpp"
#include "attukan/numerics/param_store.hpp"
#include "attukan/numerics/tape.hpp"

namespace attukan::network {

enum class BottleneckVariant { kan, mlp };

const char* to_string(BottleneckVariant v);
BottleneckVariant parse_bottleneck(const std::string& s);

/// Hyperparameters of the five-level attention U-shaped KAN network.
struct ModelConfig {
  std::vector<std::size_t> channels{8, 16, 32, 64, 128};
  kan::SplineSpec spline;
  std::size_t kan_layers = 3;
  bool use_attention_gates = true;
  BottleneckVariant bottleneck = BottleneckVariant::kan;
  std::size_t input_channels = 1;
  std::uint64_t seed = 0;

  static constexpr std::size_t kLevels = 5;
  /// Input height and width must be multiples of this (four 2x poolings).
  static constexpr std::size_t kSpatialMultiple = 16;

  /// Throws std::invalid_argument on a malformed configuration.
  void validate() const;
};

struct ForwardResult {
  Var prob;                                       // [B,1,H,W] in (0,1)
  std::array<Var, ModelConfig::kLevels> features;  // X^1..X^5 (encoder outputs)
};

/// Assembled network. Encoder: three conv blocks then two conv + tokenized KAN
/// stages, with 2x2 max pooling between levels. Decoder: one KAN stage and
/// three conv stages, each preceded by bilinear upsampling and fusion with an
/// (optionally attention-gated) skip. Head: 1x1 conv + sigmoid.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

  /// images: [B, input_channels, H, W] with H, W multiples of 16.
  ForwardResult forward(GradTape& tape, const Tensor& images, bool training);

 private:
  Var conv_block(GradTape& tape, const std::string& prefix, Var x, bool training);
  Var kan_block(GradTape& tape, const std::string& prefix, Var x, bool training);
  kan::TokenizedBlockConfig block_config(std::size_t channels, bool training) const;

  ModelConfig config_;
  ParamStore params_;
};

/// Deterministic construction from config.seed.
Model build(const ModelConfig& config);

/// Sum of trainable element counts (the empty store counts 0).
inline std::size_t parameter_count(const ParamStore& store) { return store.parameter_count(); }
inline std::size_t parameter_count(const Model& model) { return model.parameter_count(); }

/// Registers a conv (3x3, padding 1, with bias) + batch-norm block.
void register_conv_block(ParamStore& store, const std::string& prefix, std::size_t in_ch,
                         std::size_t out_ch, std::uint64_t seed);

}  // namespace attukan::network
