#pragma once

#include "attukan/numerics/param_store.hpp"

namespace attukan {

struct AdamOptions {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update over every trainable entry. Increments each
/// entry's step counter and leaves gradients untouched. Values and moments
/// are stored rounded to float32 so checkpoints are lossless.
void adam_step(ParamStore& store, const AdamOptions& opts = {});

}  // namespace attukan
