#pragma once

#include <utility>
#include <vector>

#include "attukan/data/sample.hpp"

namespace attukan::data {

struct Patch {
  Tensor image;  // [1,s,s]
  Tensor label;  // [s,s]
  std::size_t y = 0, x = 0;
};

/// Crop of a sample at (y, x).
Patch crop(const SegmentationSample& sample, std::size_t y, std::size_t x, std::size_t size);

/// `n` patches with uniformly drawn top-left corners. With a validity mask,
/// corners whose window is less than half valid are redrawn.
std::vector<Patch> sample_patches(const SegmentationSample& sample, std::size_t n, std::size_t size,
                                  Rng& rng);

struct AugmentOptions {
  double brightness = 0.1;    // additive shift in [-b, b]
  double contrast_min = 0.9;  // scale about the patch mean
  double contrast_max = 1.1;
  double noise_sigma = 0.02;
  bool hflip = false;  // random flip shared by both views and the label
};

struct View {
  Tensor image;  // [1,s,s]
  Tensor label;  // [s,s]
};

/// Two intensity-perturbed views of one patch. Geometry is never changed
/// independently, so the two views stay pixel-aligned and share the label.
std::pair<View, View> augment_two_views(const Tensor& image, const Tensor& label, Rng& rng,
                                        const AugmentOptions& opts = {});

}  // namespace attukan::data
