#include "attukan/data/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace attukan::data {

namespace {

constexpr std::size_t kBins = 256;

std::size_t bin_of(double v) {
  return std::min<std::size_t>(kBins - 1, static_cast<std::size_t>(std::max(0.0, v) * kBins));
}

// Grey-level mapping of one tile: midpoint of the clipped cumulative histogram.
std::array<double, kBins> tile_mapping(const Tensor& img, std::size_t w, std::size_t y0, std::size_t y1,
                                       std::size_t x0, std::size_t x1, double clip_limit) {
  std::array<double, kBins> hist{};
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) hist[bin_of(img[y * w + x])] += 1.0;
  const double n = static_cast<double>((y1 - y0) * (x1 - x0));
  if (std::isfinite(clip_limit)) {
    const double limit = std::max(1.0, clip_limit * n / kBins);
    double excess = 0.0;
    for (auto& h : hist)
      if (h > limit) {
        excess += h - limit;
        h = limit;
      }
    const double share = excess / kBins;
    for (auto& h : hist) h += share;
  }
  std::array<double, kBins> map{};
  double below = 0.0;
  for (std::size_t b = 0; b < kBins; ++b) {
    map[b] = (2.0 * below + hist[b]) / (2.0 * n);
    below += hist[b];
  }
  return map;
}

// Tile index pair and blend weight for pixel coordinate p along one axis.
struct Blend {
  std::size_t lo, hi;
  double t;
};

Blend blend(double p, const std::vector<double>& centres) {
  const std::size_t n = centres.size();
  if (p <= centres.front()) return {0, 0, 0.0};
  if (p >= centres.back()) return {n - 1, n - 1, 0.0};
  std::size_t i = 0;
  while (centres[i + 1] < p) ++i;
  return {i, i + 1, (p - centres[i]) / (centres[i + 1] - centres[i])};
}

}  // namespace

Tensor luminance(const Tensor& rgb) {
  require_rank(rgb, 3, "luminance input");
  if (rgb.dim(0) != 3) throw DimensionError("luminance expects [3,H,W], got " + to_string(rgb.shape()));
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  Tensor out({rgb.dim(1), rgb.dim(2)});
  for (std::size_t i = 0; i < plane; ++i)
    out[i] = 0.299 * rgb[i] + 0.587 * rgb[plane + i] + 0.114 * rgb[2 * plane + i];
  return out;
}

Tensor to_gray_normalize(const Tensor& image) {
  Tensor g;
  if (image.rank() == 2) {
    g = image;
  } else if (image.rank() == 3 && image.dim(0) == 1) {
    g = image.reshaped({image.dim(1), image.dim(2)});
  } else if (image.rank() == 3 && image.dim(0) == 3) {
    g = luminance(image);
  } else {
    throw DimensionError("to_gray_normalize expects [H,W], [1,H,W] or [3,H,W], got " +
                         to_string(image.shape()));
  }
  const auto [mn, mx] = std::minmax_element(g.data().begin(), g.data().end());
  const double lo = *mn, range = *mx - *mn;
  for (auto& v : g.data()) v = range > 0.0 ? (v - lo) / range : 0.0;
  return g;
}

Tensor clahe(const Tensor& image, double clip_limit, std::size_t tiles) {
  require_rank(image, 2, "clahe input");
  if (tiles == 0) throw std::invalid_argument("clahe needs at least one tile");
  if (!(clip_limit > 0.0)) throw std::invalid_argument("clahe clip limit must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (h < tiles || w < tiles)
    throw DimensionError("clahe: image " + to_string(image.shape()) + " is smaller than the " +
                         std::to_string(tiles) + "x" + std::to_string(tiles) + " tile grid");

  auto edges = [tiles](std::size_t n) {
    std::vector<std::size_t> e(tiles + 1);
    for (std::size_t i = 0; i <= tiles; ++i) e[i] = i * n / tiles;
    return e;
  };
  const auto ey = edges(h), ex = edges(w);
  std::vector<double> cy(tiles), cx(tiles);
  for (std::size_t i = 0; i < tiles; ++i) {
    cy[i] = 0.5 * static_cast<double>(ey[i] + ey[i + 1]) - 0.5;
    cx[i] = 0.5 * static_cast<double>(ex[i] + ex[i + 1]) - 0.5;
  }
  std::vector<std::array<double, kBins>> maps;
  maps.reserve(tiles * tiles);
  for (std::size_t i = 0; i < tiles; ++i)
    for (std::size_t j = 0; j < tiles; ++j)
      maps.push_back(tile_mapping(image, w, ey[i], ey[i + 1], ex[j], ex[j + 1], clip_limit));

  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    const Blend by = blend(static_cast<double>(y), cy);
    for (std::size_t x = 0; x < w; ++x) {
      const Blend bx = blend(static_cast<double>(x), cx);
      const std::size_t b = bin_of(image[y * w + x]);
      const double top = (1 - bx.t) * maps[by.lo * tiles + bx.lo][b] + bx.t * maps[by.lo * tiles + bx.hi][b];
      const double bot = (1 - bx.t) * maps[by.hi * tiles + bx.lo][b] + bx.t * maps[by.hi * tiles + bx.hi][b];
      out[y * w + x] = std::clamp((1 - by.t) * top + by.t * bot, 0.0, 1.0);
    }
  }
  return out;
}

Tensor gamma_correct(const Tensor& image, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  Tensor out = image;
  for (auto& v : out.data()) v = std::pow(std::clamp(v, 0.0, 1.0), gamma);
  return out;
}

Tensor preprocess(const Tensor& image, const PreprocessOptions& opts) {
  Tensor g = gamma_correct(clahe(to_gray_normalize(image), opts.clip_limit, opts.tiles), opts.gamma);
  const std::size_t h = g.dim(0), w = g.dim(1);
  return std::move(g).reshaped({1, h, w});
}

}  // namespace attukan::data
