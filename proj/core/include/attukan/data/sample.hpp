#pragma once

#include <optional>
#include <random>
#include <string>

#include "attukan/numerics/tensor.hpp"

namespace attukan::data {

/// Random engine used by every stochastic data operation.
using Rng = std::mt19937_64;

/// Image [1,H,W] in [0,1], binary label [H,W], optional binary validity mask [H,W].
struct SegmentationSample {
  Tensor image;
  Tensor label;
  std::optional<Tensor> mask;
  std::string id;

  std::size_t height() const { return label.dim(0); }
  std::size_t width() const { return label.dim(1); }
  /// Throws DimensionError if shapes disagree or label/mask are not binary.
  void validate() const;
};

}  // namespace attukan::data
