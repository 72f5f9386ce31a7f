#include "attukan/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "attukan/numerics/init.hpp"

namespace attukan::data {

void SegmentationSample::validate() const {
  require_rank(label, 2, "sample label");
  const Shape plane{label.dim(0), label.dim(1)};
  require_shape(image, {1, plane[0], plane[1]}, "sample image");
  for (double v : label.data())
    if (v != 0.0 && v != 1.0) throw DimensionError("sample label must be binary");
  if (mask) {
    require_shape(*mask, plane, "sample mask");
    for (double v : mask->data())
      if (v != 0.0 && v != 1.0) throw DimensionError("sample mask must be binary");
  }
}

void SynthConfig::validate() const {
  if (size < 16) throw std::invalid_argument("synthetic image size must be at least 16");
  if (n_trees == 0) throw std::invalid_argument("n_trees must be positive");
  if (!(w_min > 0.0) || w_max < w_min) throw std::invalid_argument("need 0 < w_min <= w_max");
  if (w_max < 2.0) throw std::invalid_argument("w_max must be at least 2 so trunks are 2 px wide");
  if (tortuosity < 0.0 || noise_sigma < 0.0 || gradient_amplitude < 0.0)
    throw std::invalid_argument("tortuosity, noise_sigma and gradient_amplitude must be nonnegative");
  if (contrast <= 0.0 || contrast > 1.0) throw std::invalid_argument("contrast must be in (0, 1]");
}

namespace {

struct Vec2 {
  double x, y;
};

class TreePainter {
 public:
  TreePainter(const SynthConfig& cfg, Rng& rng, Tensor& label)
      : cfg_(cfg), rng_(rng), label_(label), n_(static_cast<double>(cfg.size)) {}

  void tree() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int side = static_cast<int>(u(rng_) * 4.0) % 4;
    const double along = (0.15 + 0.7 * u(rng_)) * (n_ - 1);
    Vec2 p{};
    double angle = 0.0;
    switch (side) {
      case 0: p = {along, 0.0}, angle = std::numbers::pi / 2; break;
      case 1: p = {n_ - 1, along}, angle = std::numbers::pi; break;
      case 2: p = {along, n_ - 1}, angle = -std::numbers::pi / 2; break;
      default: p = {0.0, along}, angle = 0.0; break;
    }
    angle += (u(rng_) - 0.5) * 0.8;
    const double w0 = std::max(2.0, cfg_.w_max * (0.8 + 0.2 * u(rng_)));
    branch(p, angle, w0, 0);
  }

 private:
  void branch(Vec2 p, double angle, double width, std::size_t depth) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double len = n_ * (0.3 + 0.2 * u(rng_)) * std::pow(0.75, static_cast<double>(depth));
    const double end_width = std::max(cfg_.w_min, width * (0.6 + 0.15 * u(rng_)));
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    const Vec2 q{p.x + len * dir.x, p.y + len * dir.y};
    const double bend = cfg_.tortuosity * len * (u(rng_) - 0.5);
    const Vec2 c{0.5 * (p.x + q.x) - bend * dir.y, 0.5 * (p.y + q.y) + bend * dir.x};
    stroke(p, c, q, width, end_width);

    if (depth >= cfg_.branch_depth) return;
    // Tangent at the end of the quadratic curve.
    const double end_angle = std::atan2(q.y - c.y, q.x - c.x);
    for (double sign : {-1.0, 1.0}) {
      const double spread = 0.35 + 0.45 * u(rng_);
      branch(q, end_angle + sign * spread, end_width, depth + 1);
    }
  }

  void stroke(Vec2 a, Vec2 c, Vec2 b, double w0, double w1) {
    const double approx = std::hypot(c.x - a.x, c.y - a.y) + std::hypot(b.x - c.x, b.y - c.y);
    const std::size_t steps = static_cast<std::size_t>(std::ceil(approx * 4.0)) + 1;
    for (std::size_t i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(steps);
      const double s = 1.0 - t;
      const Vec2 pt{s * s * a.x + 2 * s * t * c.x + t * t * b.x, s * s * a.y + 2 * s * t * c.y + t * t * b.y};
      disc(pt, std::max(0.5, 0.5 * (w0 + (w1 - w0) * t)));
    }
  }

  void disc(Vec2 centre, double r) {
    const long size = static_cast<long>(cfg_.size);
    const long y0 = std::max(0L, static_cast<long>(std::floor(centre.y - r)));
    const long y1 = std::min(size - 1, static_cast<long>(std::ceil(centre.y + r)));
    const long x0 = std::max(0L, static_cast<long>(std::floor(centre.x - r)));
    const long x1 = std::min(size - 1, static_cast<long>(std::ceil(centre.x + r)));
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) - centre.x, dy = static_cast<double>(y) - centre.y;
        if (dx * dx + dy * dy <= r * r) label_[static_cast<std::size_t>(y * size + x)] = 1.0;
      }
  }

  const SynthConfig& cfg_;
  Rng& rng_;
  Tensor& label_;
  double n_;
};

double foreground_fraction(const Tensor& label) {
  double s = 0.0;
  for (double v : label.data()) s += v;
  return s / static_cast<double>(label.size());
}

}  // namespace

Tensor render_label(const Tensor& label, double contrast) {
  require_rank(label, 2, "render_label");
  const std::size_t h = label.dim(0), w = label.dim(1);
  auto at = [&](long y, long x) {
    y = std::clamp(y, 0L, static_cast<long>(h) - 1);
    x = std::clamp(x, 0L, static_cast<long>(w) - 1);
    return label[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  static constexpr double k[3] = {0.25, 0.5, 0.25};
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double b = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
          b += k[i + 1] * k[j + 1] * at(static_cast<long>(y) + i, static_cast<long>(x) + j);
      out[y * w + x] = 1.0 - contrast * b;
    }
  return out;
}

SegmentationSample synth_sample(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.size;
  double last = 0.0;
  for (int attempt = 0; attempt < SynthConfig::kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(attempt)));
    Tensor label({n, n});
    TreePainter painter(cfg, rng, label);
    for (std::size_t t = 0; t < cfg.n_trees; ++t) painter.tree();
    last = foreground_fraction(label);
    if (last < SynthConfig::kMinFraction || last > SynthConfig::kMaxFraction) continue;

    Tensor image = render_label(label, cfg.contrast);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double theta = u(rng) * 2.0 * std::numbers::pi;
    const double cx = std::cos(theta), cy = std::sin(theta);
    const double lo = std::min(0.0, cx) + std::min(0.0, cy);
    const double span = std::abs(cx) + std::abs(cy);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double denom = static_cast<double>(n - 1);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double ramp = ((cx * static_cast<double>(x) + cy * static_cast<double>(y)) / denom - lo) / span;
        double v = image[y * n + x] - cfg.gradient_amplitude * ramp;
        if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise(rng);
        image[y * n + x] = std::clamp(v, 0.0, 1.0);
      }

    SegmentationSample s;
    s.image = std::move(image).reshaped({1, n, n});
    s.label = std::move(label);
    s.id = "synth_" + std::to_string(cfg.seed);
    return s;
  }
  throw SynthesisError("synthetic label foreground fraction " + std::to_string(last) +
                       " outside [0.03, 0.25] after 10 attempts");
}

std::vector<SegmentationSample> synth_dataset(const SynthConfig& cfg, std::size_t count) {
  std::vector<SegmentationSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SynthConfig c = cfg;
    c.seed = mix_seed(cfg.seed, 1000 + i);
    out.push_back(synth_sample(c));
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    out.back().id = id;
  }
  return out;
}

}  // namespace attukan::data
