#include "attukan/kan/blocks.hpp"

#include <cmath>

#include "attukan/numerics/init.hpp"

namespace attukan::kan {

TokenGrid tokenize(GradTape& tape, Var x, Var proj) {
  const Tensor& xv = tape.value(x);
  require_rank(xv, 4, "tokenize input");
  const Tensor& pv = tape.value(proj);
  require_rank(pv, 2, "tokenize projection");
  if (pv.dim(0) != xv.dim(1))
    throw DimensionError("tokenize: projection " + to_string(pv.shape()) + " does not accept " +
                         std::to_string(xv.dim(1)) + " channels");
  TokenGrid g{Var{}, xv.dim(0), xv.dim(2), xv.dim(3)};
  g.tokens = ops::matmul(tape, ops::to_tokens(tape, x), proj);
  return g;
}

Var detokenize(GradTape& tape, const TokenGrid& grid, Var proj_out) {
  const Tensor& pv = tape.value(proj_out);
  require_rank(pv, 2, "detokenize projection");
  if (pv.dim(0) != tape.value(grid.tokens).dim(1))
    throw DimensionError("detokenize: projection " + to_string(pv.shape()) +
                         " does not accept token width " +
                         std::to_string(tape.value(grid.tokens).dim(1)));
  Var rows = ops::matmul(tape, grid.tokens, proj_out);
  return ops::from_tokens(tape, rows, grid.batch, grid.height, grid.width);
}

void register_mlp(ParamStore& store, const std::string& prefix,
                  std::span<const std::size_t> widths, std::uint64_t seed) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[i]));
    store.add(p + ".weight", uniform_init({widths[i], widths[i + 1]}, bound, seed, p + ".weight"));
    store.add(p + ".bias", Tensor({widths[i + 1]}));
  }
}

Var mlp_block(GradTape& tape, ParamStore& store, const std::string& prefix, Var x,
              std::size_t num_layers) {
  Var h = x;
  for (std::size_t i = 0; i < num_layers; ++i) {
    if (i > 0) h = ops::relu(tape, h);
    const std::string p = prefix + ".layer" + std::to_string(i);
    h = ops::linear(tape, h, tape.parameter(store, p + ".weight"), tape.parameter(store, p + ".bias"));
  }
  return h;
}

void register_tokenized_block(ParamStore& store, const std::string& prefix,
                              const TokenizedBlockConfig& cfg, std::uint64_t seed) {
  const std::size_t C = cfg.channels;
  const double proj_bound = 1.0 / std::sqrt(static_cast<double>(C));
  store.add(prefix + ".proj", uniform_init({C, C}, proj_bound, seed, prefix + ".proj"));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    if (cfg.mixer == Mixer::kan) {
      register_kan_layer(store, p + ".kan", C, C, cfg.spline, seed);
    } else {
      const std::size_t widths[] = {C, C};
      register_mlp(store, p + ".mlp", widths, seed);
    }
    store.add(p + ".dw.weight", uniform_init({C, 1, 3, 3}, 1.0 / 3.0, seed, p + ".dw.weight"));
    store.add(p + ".dw.bias", Tensor({C}));
    store.add(p + ".bn.gamma", Tensor({C}, 1.0));
    store.add(p + ".bn.beta", Tensor({C}));
    store.add_buffer(p + ".bn.running_mean", Tensor({C}));
    store.add_buffer(p + ".bn.running_var", Tensor({C}, 1.0));
  }
  store.add(prefix + ".proj_out", uniform_init({C, C}, proj_bound, seed, prefix + ".proj_out"));
  store.add(prefix + ".ln.gamma", Tensor({C}, 1.0));
  store.add(prefix + ".ln.beta", Tensor({C}));
}

Var tokenized_kan_block(GradTape& tape, ParamStore& store, const std::string& prefix, Var x,
                        const TokenizedBlockConfig& cfg) {
  TokenGrid grid = tokenize(tape, x, tape.parameter(store, prefix + ".proj"));
  Var h = grid.tokens;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    if (cfg.mixer == Mixer::kan)
      h = kan_layer_forward(tape, h, bind_kan_layer(tape, store, p + ".kan"), cfg.spline);
    else
      h = mlp_block(tape, store, p + ".mlp", h, 1);
    Var s = ops::from_tokens(tape, h, grid.batch, grid.height, grid.width);
    s = dwconv3x3(tape, s, tape.parameter(store, p + ".dw.weight"),
                  tape.parameter(store, p + ".dw.bias"));
    s = ops::batch_norm(tape, s, tape.parameter(store, p + ".bn.gamma"),
                        tape.parameter(store, p + ".bn.beta"),
                        store.value(p + ".bn.running_mean"), store.value(p + ".bn.running_var"),
                        cfg.bn);
    s = ops::relu(tape, s);
    h = ops::to_tokens(tape, s);
  }
  grid.tokens = h;
  Var branch = detokenize(tape, grid, tape.parameter(store, prefix + ".proj_out"));
  Var y = ops::add(tape, x, branch);
  Var t = ops::layer_norm(tape, ops::to_tokens(tape, y), tape.parameter(store, prefix + ".ln.gamma"),
                          tape.parameter(store, prefix + ".ln.beta"));
  return ops::from_tokens(tape, t, grid.batch, grid.height, grid.width);
}

}  // namespace attukan::kan
