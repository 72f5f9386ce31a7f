#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "attukan/kan/kan_layer.hpp"
#include "attukan/numerics/ops.hpp"

namespace attukan::kan {

/// Feature map flattened to one token per spatial position (1x1 patches).
struct TokenGrid {
  Var tokens;  // [B*H*W, D]
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// x [B,C,H,W], proj [C,D] -> tokens [B*H*W, D]
TokenGrid tokenize(GradTape& tape, Var x, Var proj);
/// tokens [B*H*W, D], proj_out [D,C] -> [B,C,H,W]
Var detokenize(GradTape& tape, const TokenGrid& grid, Var proj_out);

/// Depth-wise 3x3 convolution on [B,D,H,W]; kernel [D,1,3,3], bias [D].
inline Var dwconv3x3(GradTape& tape, Var x, Var kernel, Var bias) {
  return ops::depthwise_conv3x3(tape, x, kernel, bias);
}

/// MLP baseline: W_{L-1} o ReLU o ... o ReLU o W_0 with weights
/// `<prefix>.layer<i>.weight` [n_i, n_{i+1}] and `.bias` [n_{i+1}].
void register_mlp(ParamStore& store, const std::string& prefix,
                  std::span<const std::size_t> widths, std::uint64_t seed);
Var mlp_block(GradTape& tape, ParamStore& store, const std::string& prefix, Var x,
              std::size_t num_layers);

enum class Mixer { kan, mlp };

struct TokenizedBlockConfig {
  std::size_t channels = 0;
  SplineSpec spline;
  std::size_t layers = 3;
  Mixer mixer = Mixer::kan;
  ops::BatchNormOptions bn;
};

void register_tokenized_block(ParamStore& store, const std::string& prefix,
                              const TokenizedBlockConfig& cfg, std::uint64_t seed);

/// Resolution- and channel-preserving block:
///   tokens = tokenize(x); repeat `layers` times: mixer -> dwconv -> BN -> ReLU;
///   y = LN_channels(x + detokenize(tokens)).
/// `cfg.bn.training` selects batch or running statistics.
Var tokenized_kan_block(GradTape& tape, ParamStore& store, const std::string& prefix, Var x,
                        const TokenizedBlockConfig& cfg);

}  // namespace attukan::kan
