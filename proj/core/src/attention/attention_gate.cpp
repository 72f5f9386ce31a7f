#include "attukan/attention/attention_gate.hpp"

#include <cmath>

#include "attukan/numerics/init.hpp"
#include "attukan/numerics/ops.hpp"

namespace attukan::attention {

void register_attention_gate(ParamStore& store, const std::string& prefix, const GateShape& shape,
                             std::uint64_t seed) {
  if (shape.skip_channels == 0 || shape.gate_channels == 0)
    throw std::invalid_argument("attention gate needs positive channel counts");
  const std::size_t ci = shape.inter();
  auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  store.add(prefix + ".wx", uniform_init({ci, shape.skip_channels, 1, 1}, bound(shape.skip_channels),
                                         seed, prefix + ".wx"));
  store.add(prefix + ".wg", uniform_init({ci, shape.gate_channels, 1, 1}, bound(shape.gate_channels),
                                         seed, prefix + ".wg"));
  store.add(prefix + ".bg", Tensor({ci}));
  store.add(prefix + ".psi", uniform_init({1, ci, 1, 1}, bound(ci), seed, prefix + ".psi"));
  store.add(prefix + ".bpsi", Tensor({1}));
}

GateOutput attention_gate(GradTape& tape, ParamStore& store, const std::string& prefix, Var x,
                          Var gate) {
  require_rank(tape.value(x), 4, "attention_gate skip input");
  // A copy: recording new nodes may move the tape's storage.
  const Shape xs = tape.value(x).shape();
  require_rank(tape.value(gate), 4, "attention_gate gating signal");
  if (store.value(prefix + ".wx").dim(1) != xs.at(1))
    throw DimensionError("attention_gate: skip input has " + std::to_string(xs.at(1)) +
                         " channels, gate expects " +
                         std::to_string(store.value(prefix + ".wx").dim(1)));
  if (store.value(prefix + ".wg").dim(1) != tape.value(gate).dim(1))
    throw DimensionError("attention_gate: gating signal has " +
                         std::to_string(tape.value(gate).dim(1)) + " channels, gate expects " +
                         std::to_string(store.value(prefix + ".wg").dim(1)));

  Var g = gate;
  while (tape.value(g).dim(2) < xs.at(2) || tape.value(g).dim(3) < xs.at(3))
    g = ops::bilinear_upsample2x(tape, g);
  if (tape.value(g).dim(2) != xs.at(2) || tape.value(g).dim(3) != xs.at(3) ||
      tape.value(g).dim(0) != xs.at(0))
    throw DimensionError("attention_gate: gating signal " + to_string(tape.value(gate).shape()) +
                         " cannot be resized to skip " + to_string(xs));

  Var theta = ops::conv2d(tape, x, tape.parameter(store, prefix + ".wx"), Var{}, 1, 0);
  Var phi = ops::conv2d(tape, g, tape.parameter(store, prefix + ".wg"),
                        tape.parameter(store, prefix + ".bg"), 1, 0);
  Var act = ops::relu(tape, ops::add(tape, theta, phi));
  Var q = ops::conv2d(tape, act, tape.parameter(store, prefix + ".psi"),
                      tape.parameter(store, prefix + ".bpsi"), 1, 0);
  Var alpha = ops::sigmoid(tape, q);
  return {ops::mul_channel_broadcast(tape, x, alpha), alpha};
}

Var fuse_skip(GradTape& tape, Var gated, Var upsampled) {
  return ops::concat_channels(tape, gated, upsampled);
}

}  // namespace attukan::attention
