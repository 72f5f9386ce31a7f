#pragma once

#include <span>

#include "attukan/numerics/tape.hpp"

// Differentiable primitives recorded on a GradTape. Feature maps use the
// [B, C, H, W] layout; token matrices are [rows, D].
namespace attukan::ops {

// Elementwise.
Var add(GradTape& t, Var a, Var b);
Var mul(GradTape& t, Var a, Var b);
Var scale(GradTape& t, Var a, double c);
Var relu(GradTape& t, Var x);
Var sigmoid(GradTape& t, Var x);
Var silu(GradTape& t, Var x);

// Reductions to a scalar.
Var sum(GradTape& t, Var x);
Var mean(GradTape& t, Var x);
/// sum_i weights[i] * terms[i] over scalar terms.
Var weighted_sum(GradTape& t, std::span<const Var> terms, std::span<const double> weights);

/// Cross-correlation with zero padding. `bias` may be an invalid Var.
Var conv2d(GradTape& t, Var input, Var kernel, Var bias, int stride, int padding);
/// Per-channel 3x3 convolution, padding 1, stride 1. kernel [C,1,3,3], bias [C].
Var depthwise_conv3x3(GradTape& t, Var input, Var kernel, Var bias);

/// 2x2 max pooling, stride 2. Gradient goes to the first maximum in
/// row-major window order.
Var max_pool2x2(GradTape& t, Var input);
/// Bilinear 2x upsampling with half-pixel centres (align_corners = false).
Var bilinear_upsample2x(GradTape& t, Var input);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
  bool training = true;
};

/// Per-channel normalisation over (B, H, W). In training mode the running
/// statistics are updated in place; they are stored rounded to float32.
Var batch_norm(GradTape& t, Var input, Var gamma, Var beta, Tensor& running_mean,
               Tensor& running_var, const BatchNormOptions& opts);

/// Normalises over the last dimension, then applies gamma * x + beta.
Var layer_norm(GradTape& t, Var input, Var gamma, Var beta, double eps = 1e-5);

/// [B,C,H,W] -> [B*H*W, C]
Var to_tokens(GradTape& t, Var input);
/// [B*H*W, C] -> [B,C,H,W]
Var from_tokens(GradTape& t, Var tokens, std::size_t batch, std::size_t height,
                std::size_t width);

/// [n,k] x [k,m] -> [n,m]
Var matmul(GradTape& t, Var a, Var b);
/// x [n,k] W [k,m] bias [m] -> [n,m]; bias may be invalid.
Var linear(GradTape& t, Var x, Var weight, Var bias);

/// Concatenates [B,Ca,H,W] and [B,Cb,H,W] along channels, `a` first.
Var concat_channels(GradTape& t, Var a, Var b);
/// x [B,C,H,W] * alpha [B,1,H,W] broadcast over channels.
Var mul_channel_broadcast(GradTape& t, Var x, Var alpha);

}  // namespace attukan::ops
