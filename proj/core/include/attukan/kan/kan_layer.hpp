#pragma once

#include <cstdint>
#include <string>

#include "attukan/kan/spline.hpp"
#include "attukan/numerics/param_store.hpp"
#include "attukan/numerics/tape.hpp"

namespace attukan::kan {

/// Parameter handles of one KAN layer: per-edge spline coefficients
/// [n_in, n_out, G+k], base weights [n_in, n_out], spline weights [n_in, n_out].
struct KanLayerParams {
  Var coeff;
  Var base_weight;
  Var spline_weight;
};

/// Registers `<prefix>.coeff`, `<prefix>.base_weight`, `<prefix>.spline_weight`.
/// Coefficients ~ U(-0.1, 0.1), base weights ~ U(-1/sqrt(n_in), 1/sqrt(n_in)),
/// spline weights 1.
void register_kan_layer(ParamStore& store, const std::string& prefix, std::size_t n_in,
                        std::size_t n_out, const SplineSpec& spec, std::uint64_t seed);

KanLayerParams bind_kan_layer(GradTape& tape, ParamStore& store, const std::string& prefix);

/// y[r, q] = sum_p  w_b[p,q] * silu(x[r,p]) + w_s[p,q] * sum_i c[p,q,i] * B_i(x[r,p])
///
/// x is [rows, n_in]. Spline inputs are clamped to the grid domain; the base
/// branch sees the raw input.
Var kan_layer_forward(GradTape& tape, Var x, const KanLayerParams& params, const SplineSpec& spec);

}  // namespace attukan::kan
