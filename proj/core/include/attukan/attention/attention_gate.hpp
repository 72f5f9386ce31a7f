#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "attukan/numerics/param_store.hpp"
#include "attukan/numerics/tape.hpp"

namespace attukan::attention {

/// Channel sizes of one gate. `inter_channels` of 0 selects max(1, skip/2).
struct GateShape {
  std::size_t skip_channels = 0;
  std::size_t gate_channels = 0;
  std::size_t inter_channels = 0;

  std::size_t inter() const { return inter_channels ? inter_channels : std::max<std::size_t>(1, skip_channels / 2); }
};

/// Registers the 1x1 maps of the additive gate:
///   `<prefix>.wx`    [C_int, C_skip, 1, 1]   (no bias)
///   `<prefix>.wg`    [C_int, C_gate, 1, 1]
///   `<prefix>.bg`    [C_int]                 per-channel bias broadcast over space
///   `<prefix>.psi`   [1, C_int, 1, 1]
///   `<prefix>.bpsi`  [1]                     scalar bias
void register_attention_gate(ParamStore& store, const std::string& prefix, const GateShape& shape,
                             std::uint64_t seed);

struct GateOutput {
  Var gated;  // [B, C_skip, H, W]
  Var alpha;  // [B, 1, H, W], each element in (0, 1)
};

/// alpha = sigmoid(psi * ReLU(Wx x + Wg g + bg) + bpsi), gated = x * alpha.
/// A coarser gating signal is bilinearly upsampled (2x steps) to x's size.
GateOutput attention_gate(GradTape& tape, ParamStore& store, const std::string& prefix, Var x,
                          Var gate);

/// Channel concatenation of the gated skip (first) and the upsampled decoder
/// feature. Spatial sizes must agree.
Var fuse_skip(GradTape& tape, Var gated, Var upsampled);

}  // namespace attukan::attention
