#pragma once

// Slow, direct reference implementations shared by the unit tests and the
// acceptance checks. None of them call into the library's algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "attukan/metrics/metrics.hpp"

namespace oracle {

// Textbook Cox-de Boor on the extended uniform knot vector, degree by degree.
inline std::vector<double> cox_de_boor(double x, double lo, double hi, int G, int k) {
  const double h = (hi - lo) / G;
  const int nk = G + 2 * k + 1;
  std::vector<double> t(nk);
  for (int i = 0; i < nk; ++i) t[i] = lo + (i - k) * h;
  if (x >= hi) x = std::nextafter(hi, lo);
  if (x < lo) x = lo;
  std::vector<double> B(nk - 1, 0.0);
  for (int i = 0; i < nk - 1; ++i) B[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  for (int d = 1; d <= k; ++d) {
    std::vector<double> N(nk - 1 - d, 0.0);
    for (int i = 0; i < nk - 1 - d; ++i) {
      double left = 0.0, right = 0.0;
      if (t[i + d] != t[i]) left = (x - t[i]) / (t[i + d] - t[i]) * B[i];
      if (t[i + d + 1] != t[i + 1]) right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * B[i + 1];
      N[i] = left + right;
    }
    B = std::move(N);
  }
  return B;
}

using Point = std::pair<long, long>;
using PointSet = std::set<Point>;

inline attukan::metrics::Mask random_mask(std::size_t h, std::size_t w, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  attukan::metrics::Mask m(h, w);
  for (auto& v : m.px) v = b(rng);
  return m;
}

inline PointSet points(const attukan::metrics::Mask& m) {
  PointSet out;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(y, x)) out.emplace(static_cast<long>(y), static_cast<long>(x));
  return out;
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// 95th percentile of nearest distances from a to b, by all pairs.
inline double directed_hd95(const PointSet& a, const PointSet& b) {
  std::vector<double> d;
  for (auto [ay, ax] : a) {
    double best = std::numeric_limits<double>::infinity();
    for (auto [by, bx] : b)
      best = std::min(best, std::hypot(static_cast<double>(ay - by), static_cast<double>(ax - bx)));
    d.push_back(best);
  }
  return percentile(d, 95.0);
}

inline double hd95(const attukan::metrics::Mask& a, const attukan::metrics::Mask& b) {
  const PointSet pa = points(a), pb = points(b);
  return std::max(directed_hd95(pa, pb), directed_hd95(pb, pa));
}

inline PointSet dilate(const PointSet& s, int r, long h, long w) {
  PointSet out;
  for (auto [y, x] : s)
    for (long yy = 0; yy < h; ++yy)
      for (long xx = 0; xx < w; ++xx)
        if ((yy - y) * (yy - y) + (xx - x) * (xx - x) <= r * r) out.emplace(yy, xx);
  return out;
}

inline std::size_t components(const PointSet& s) {
  PointSet seen;
  std::size_t n = 0;
  for (const auto& p : s) {
    if (seen.count(p)) continue;
    ++n;
    std::queue<Point> q;
    q.push(p);
    seen.insert(p);
    while (!q.empty()) {
      auto [y, x] = q.front();
      q.pop();
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const Point nb{y + dy, x + dx};
          if (s.count(nb) && !seen.count(nb)) {
            seen.insert(nb);
            q.push(nb);
          }
        }
    }
  }
  return n;
}

// |(x & dil(y)) | (dil(x) & y)| / |x | y|
inline double tolerant_overlap(const PointSet& x, const PointSet& y, int r, long h, long w) {
  const PointSet dx = dilate(x, r, h, w), dy = dilate(y, r, h, w);
  PointSet num, den = x;
  for (const auto& p : x)
    if (dy.count(p)) num.insert(p);
  for (const auto& p : y)
    if (dx.count(p)) num.insert(p);
  den.insert(y.begin(), y.end());
  return den.empty() ? 0.0 : static_cast<double>(num.size()) / static_cast<double>(den.size());
}

struct Cal {
  double c, a, l, f;
};

// Skeletons are inputs: the length score compares given skeletons.
inline Cal cal(const attukan::metrics::Mask& pred, const attukan::metrics::Mask& target,
               const attukan::metrics::Mask& pred_skel, const attukan::metrics::Mask& target_skel, int alpha = 2,
               int beta = 2) {
  const long h = static_cast<long>(target.height), w = static_cast<long>(target.width);
  const PointSet P = points(pred), T = points(target);
  const double dc = std::abs(static_cast<double>(components(T)) - static_cast<double>(components(P)));
  Cal r{};
  r.c = 1.0 - std::min(1.0, dc / static_cast<double>(T.size()));
  r.a = tolerant_overlap(P, T, alpha, h, w);
  r.l = tolerant_overlap(points(pred_skel), points(target_skel), beta, h, w);
  r.f = r.c * r.a * r.l;
  return r;
}

}  // namespace oracle
