#pragma once

#include "attukan/numerics/tensor.hpp"

namespace attukan::data {

/// Luminance 0.299 R + 0.587 G + 0.114 B of a [3,H,W] image, as [H,W].
Tensor luminance(const Tensor& rgb);

/// Accepts [H,W], [1,H,W] or [3,H,W]; returns [H,W] min-max scaled to [0,1].
/// A constant image maps to zeros.
Tensor to_gray_normalize(const Tensor& image);

/// Tile-wise histogram equalisation of an [H,W] image in [0,1] with 256 bins.
/// `clip_limit` is relative to the mean bin height; clipped mass is spread
/// evenly over all bins. Tile mappings are blended bilinearly between tile
/// centres. Throws if the image is smaller than the tile grid.
Tensor clahe(const Tensor& image, double clip_limit = 2.0, std::size_t tiles = 8);

/// out = in^gamma. Throws for gamma <= 0.
Tensor gamma_correct(const Tensor& image, double gamma = 1.2);

struct PreprocessOptions {
  double clip_limit = 2.0;
  std::size_t tiles = 8;
  double gamma = 1.2;
};

/// to_gray_normalize, then clahe, then gamma_correct. Returns [1,H,W].
Tensor preprocess(const Tensor& image, const PreprocessOptions& opts = {});

}  // namespace attukan::data
