#include "attukan/data/sampling.hpp"

#include <algorithm>
#include <stdexcept>

namespace attukan::data {

Patch crop(const SegmentationSample& sample, std::size_t y, std::size_t x, std::size_t size) {
  const std::size_t h = sample.height(), w = sample.width();
  if (size == 0 || y + size > h || x + size > w)
    throw DimensionError("crop window " + std::to_string(size) + " at (" + std::to_string(y) + "," +
                         std::to_string(x) + ") exceeds " + std::to_string(h) + "x" + std::to_string(w));
  Patch p;
  p.image = Tensor({1, size, size});
  p.label = Tensor({size, size});
  p.y = y;
  p.x = x;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      p.image[i * size + j] = sample.image[(y + i) * w + x + j];
      p.label[i * size + j] = sample.label[(y + i) * w + x + j];
    }
  return p;
}

std::vector<Patch> sample_patches(const SegmentationSample& sample, std::size_t n, std::size_t size,
                                  Rng& rng) {
  const std::size_t h = sample.height(), w = sample.width();
  if (size == 0 || size > h || size > w)
    throw DimensionError("patch size " + std::to_string(size) + " does not fit a " + std::to_string(h) +
                         "x" + std::to_string(w) + " image");
  std::uniform_int_distribution<std::size_t> dy(0, h - size), dx(0, w - size);
  auto valid_fraction = [&](std::size_t y, std::size_t x) {
    double s = 0.0;
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) s += (*sample.mask)[(y + i) * w + x + j];
    return s / static_cast<double>(size * size);
  };

  std::vector<Patch> out;
  out.reserve(n);
  const std::size_t max_draws = 100 * n + 100;
  for (std::size_t draws = 0; out.size() < n; ++draws) {
    if (draws >= max_draws)
      throw std::runtime_error("sample_patches: no window with at least half valid pixels in " +
                               std::to_string(max_draws) + " draws for " + sample.id);
    const std::size_t y = dy(rng), x = dx(rng);
    if (sample.mask && valid_fraction(y, x) < 0.5) continue;
    out.push_back(crop(sample, y, x, size));
  }
  return out;
}

std::pair<View, View> augment_two_views(const Tensor& image, const Tensor& label, Rng& rng,
                                        const AugmentOptions& opts) {
  require_rank(image, 3, "augment image");
  require_rank(label, 2, "augment label");
  const std::size_t h = label.dim(0), w = label.dim(1);
  require_shape(image, {1, h, w}, "augment image");

  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool flip = opts.hflip && u(rng) < 0.5;
  Tensor base = image, lab = label;
  if (flip)
    for (std::size_t y = 0; y < h; ++y) {
      std::reverse(base.ptr() + y * w, base.ptr() + (y + 1) * w);
      std::reverse(lab.ptr() + y * w, lab.ptr() + (y + 1) * w);
    }
  double mean = 0.0;
  for (double v : base.data()) mean += v;
  mean /= static_cast<double>(base.size());

  std::normal_distribution<double> noise(0.0, 1.0);
  auto view = [&]() {
    const double shift = opts.brightness * (2.0 * u(rng) - 1.0);
    const double gain = opts.contrast_min + (opts.contrast_max - opts.contrast_min) * u(rng);
    View v{base, lab};
    for (auto& px : v.image.data()) {
      double x = (px - mean) * gain + mean + shift;
      if (opts.noise_sigma > 0.0) x += opts.noise_sigma * noise(rng);
      px = std::clamp(x, 0.0, 1.0);
    }
    return v;
  };
  View a = view();
  View b = view();
  return {std::move(a), std::move(b)};
}

}  // namespace attukan::data
