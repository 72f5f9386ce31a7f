#include "attukan/network/model.hpp"

#include <cmath>
#include <stdexcept>

#include "attukan/attention/attention_gate.hpp"
#include "attukan/numerics/init.hpp"
#include "attukan/numerics/ops.hpp"

namespace attukan::network {

const char* to_string(BottleneckVariant v) { return v == BottleneckVariant::kan ? "kan" : "mlp"; }

BottleneckVariant parse_bottleneck(const std::string& s) {
  if (s == "kan") return BottleneckVariant::kan;
  if (s == "mlp") return BottleneckVariant::mlp;
  throw std::invalid_argument("unknown bottleneck variant '" + s + "' (expected kan or mlp)");
}

void ModelConfig::validate() const {
  if (channels.size() != kLevels)
    throw std::invalid_argument("model needs exactly 5 channel widths, got " +
                                std::to_string(channels.size()));
  if (channels[0] == 0) throw std::invalid_argument("channel widths must be positive");
  for (std::size_t i = 1; i < channels.size(); ++i)
    if (channels[i] <= channels[i - 1])
      throw std::invalid_argument("channel widths must be strictly increasing");
  if (input_channels == 0) throw std::invalid_argument("input_channels must be positive");
  if (kan_layers == 0) throw std::invalid_argument("kan_layers must be positive");
  spline.validate();
}

void register_conv_block(ParamStore& store, const std::string& prefix, std::size_t in_ch,
                         std::size_t out_ch, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * 9));
  store.add(prefix + ".conv.weight", uniform_init({out_ch, in_ch, 3, 3}, bound, seed,
                                                  prefix + ".conv.weight"));
  store.add(prefix + ".conv.bias", Tensor({out_ch}));
  store.add(prefix + ".bn.gamma", Tensor({out_ch}, 1.0));
  store.add(prefix + ".bn.beta", Tensor({out_ch}));
  store.add_buffer(prefix + ".bn.running_mean", Tensor({out_ch}));
  store.add_buffer(prefix + ".bn.running_var", Tensor({out_ch}, 1.0));
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_.channels;
  const std::uint64_t seed = config_.seed;

  register_conv_block(params_, "enc1", config_.input_channels, c[0], seed);
  register_conv_block(params_, "enc2", c[0], c[1], seed);
  register_conv_block(params_, "enc3", c[1], c[2], seed);
  register_conv_block(params_, "enc4", c[2], c[3], seed);
  kan::register_tokenized_block(params_, "enc4.block", block_config(c[3], true), seed);
  register_conv_block(params_, "enc5", c[3], c[4], seed);
  kan::register_tokenized_block(params_, "enc5.block", block_config(c[4], true), seed);

  register_conv_block(params_, "dec4", c[3] + c[4], c[3], seed);
  kan::register_tokenized_block(params_, "dec4.block", block_config(c[3], true), seed);
  register_conv_block(params_, "dec3", c[2] + c[3], c[2], seed);
  register_conv_block(params_, "dec2", c[1] + c[2], c[1], seed);
  register_conv_block(params_, "dec1", c[0] + c[1], c[0], seed);

  if (config_.use_attention_gates) {
    for (std::size_t level = 1; level <= 4; ++level) {
      attention::GateShape gs{c[level - 1], c[level], 0};
      attention::register_attention_gate(params_, "ag" + std::to_string(level), gs, seed);
    }
  }

  params_.add("head.weight", uniform_init({1, c[0], 1, 1}, 1.0 / std::sqrt(static_cast<double>(c[0])),
                                          seed, "head.weight"));
  params_.add("head.bias", Tensor({1}));
}

kan::TokenizedBlockConfig Model::block_config(std::size_t channels, bool training) const {
  kan::TokenizedBlockConfig cfg;
  cfg.channels = channels;
  cfg.spline = config_.spline;
  cfg.layers = config_.kan_layers;
  cfg.mixer = config_.bottleneck == BottleneckVariant::kan ? kan::Mixer::kan : kan::Mixer::mlp;
  cfg.bn.training = training;
  return cfg;
}

Var Model::conv_block(GradTape& tape, const std::string& prefix, Var x, bool training) {
  Var y = ops::conv2d(tape, x, tape.parameter(params_, prefix + ".conv.weight"),
                      tape.parameter(params_, prefix + ".conv.bias"), 1, 1);
  ops::BatchNormOptions bn;
  bn.training = training;
  y = ops::batch_norm(tape, y, tape.parameter(params_, prefix + ".bn.gamma"),
                      tape.parameter(params_, prefix + ".bn.beta"),
                      params_.value(prefix + ".bn.running_mean"),
                      params_.value(prefix + ".bn.running_var"), bn);
  return ops::relu(tape, y);
}

Var Model::kan_block(GradTape& tape, const std::string& prefix, Var x, bool training) {
  const std::size_t ch = tape.value(x).dim(1);
  return kan::tokenized_kan_block(tape, params_, prefix, x, block_config(ch, training));
}

ForwardResult Model::forward(GradTape& tape, const Tensor& images, bool training) {
  require_rank(images, 4, "model input");
  if (images.dim(1) != config_.input_channels)
    throw DimensionError("model input has " + std::to_string(images.dim(1)) +
                         " channels, expected " + std::to_string(config_.input_channels));
  if (images.dim(2) % ModelConfig::kSpatialMultiple != 0 ||
      images.dim(3) % ModelConfig::kSpatialMultiple != 0)
    throw DimensionError("model input spatial size " + attukan::to_string(images.shape()) +
                         " must be divisible by 16");

  ForwardResult r;
  auto& X = r.features;
  Var x0 = tape.constant(images);
  X[0] = conv_block(tape, "enc1", x0, training);
  X[1] = conv_block(tape, "enc2", ops::max_pool2x2(tape, X[0]), training);
  X[2] = conv_block(tape, "enc3", ops::max_pool2x2(tape, X[1]), training);
  X[3] = kan_block(tape, "enc4.block",
                   conv_block(tape, "enc4", ops::max_pool2x2(tape, X[2]), training), training);
  X[4] = kan_block(tape, "enc5.block",
                   conv_block(tape, "enc5", ops::max_pool2x2(tape, X[3]), training), training);

  // Decoder: the coarser decoder feature gates the skip of the next level up.
  auto fuse = [&](std::size_t level, Var coarse) {
    Var skip = X[level - 1];
    if (config_.use_attention_gates)
      skip = attention::attention_gate(tape, params_, "ag" + std::to_string(level), skip, coarse)
                 .gated;
    return attention::fuse_skip(tape, skip, ops::bilinear_upsample2x(tape, coarse));
  };
  Var y = kan_block(tape, "dec4.block", conv_block(tape, "dec4", fuse(4, X[4]), training), training);
  y = conv_block(tape, "dec3", fuse(3, y), training);
  y = conv_block(tape, "dec2", fuse(2, y), training);
  y = conv_block(tape, "dec1", fuse(1, y), training);

  Var logits = ops::conv2d(tape, y, tape.parameter(params_, "head.weight"),
                           tape.parameter(params_, "head.bias"), 1, 0);
  r.prob = ops::sigmoid(tape, logits);
  return r;
}

Model build(const ModelConfig& config) { return Model(config); }

}  // namespace attukan::network
