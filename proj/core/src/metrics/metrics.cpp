#include "attukan/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace attukan::metrics {

namespace {

void plane_dims(const Tensor& t, std::size_t& h, std::size_t& w) {
  const auto& s = t.shape();
  for (std::size_t i = 0; i + 2 < s.size(); ++i)
    if (s[i] != 1) throw DimensionError("expected a single [H,W] plane, got " + to_string(s));
  if (s.size() < 2) throw DimensionError("expected a single [H,W] plane, got " + to_string(s));
  h = s[s.size() - 2];
  w = s[s.size() - 1];
}

void require_same(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width)
    throw DimensionError(std::string(what) + ": " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
}

double ratio(double num, double den, const char* name, std::vector<std::string>& undefined) {
  if (den == 0.0) {
    undefined.emplace_back(name);
    return 0.0;
  }
  return num / den;
}

constexpr double kFar = 1e20;

// Lower envelope of parabolas along one line (Felzenszwalb and Huttenlocher).
void edt_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  auto cross = [f](std::size_t q, std::size_t p) {
    const double qd = static_cast<double>(q), pd = static_cast<double>(p);
    return ((f[q] + qd * qd) - (f[p] + pd * pd)) / (2.0 * (qd - pd));
  };
  std::size_t k = 0;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = 1; q < n; ++q) {
    double s = cross(q, v[k]);
    while (s <= z[k]) s = cross(q, v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

double directed_hd95(const Mask& from, const std::vector<double>& dist_to) {
  std::vector<double> d;
  d.reserve(from.count());
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from.px[i]) d.push_back(std::sqrt(dist_to[i]));
  return percentile(std::move(d), 95.0);
}

// Neighbours P2..P9 clockwise from north; outside pixels read as 0.
std::array<int, 8> neighbours(const Mask& m, std::size_t y, std::size_t x) {
  static constexpr int dy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
  static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  std::array<int, 8> p{};
  for (int i = 0; i < 8; ++i) {
    const long yy = static_cast<long>(y) + dy[i], xx = static_cast<long>(x) + dx[i];
    p[i] = (yy >= 0 && xx >= 0 && yy < static_cast<long>(m.height) && xx < static_cast<long>(m.width))
               ? m.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx))
               : 0;
  }
  return p;
}

// Yokoi connectivity number for 8-connected foreground; 1 means removing the
// pixel changes neither the foreground nor the background topology.
bool simple_point(const std::array<int, 8>& p) {
  // Ring starting east, counter-clockwise: E, NE, N, NW, W, SW, S, SE.
  const int r[8] = {p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]};
  int n = 0;
  for (int k = 0; k < 8; k += 2) {
    const int a = 1 - r[k], b = 1 - r[(k + 1) % 8], c = 1 - r[(k + 2) % 8];
    n += a - a * b * c;
  }
  return n == 1;
}

}  // namespace

Mask Mask::from_tensor(const Tensor& t, double threshold) {
  std::size_t h, w;
  plane_dims(t, h, w);
  Mask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.px[i] = t[i] >= threshold ? 1 : 0;
  return m;
}

Tensor Mask::to_tensor() const {
  Tensor t({height, width});
  for (std::size_t i = 0; i < px.size(); ++i) t[i] = px[i] ? 1.0 : 0.0;
  return t;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(px.begin(), px.end(), [](std::uint8_t v) { return v != 0; }));
}

ConfusionCounts confusion(const Mask& pred, const Mask& target, const Mask* valid) {
  require_same(pred, target, "confusion");
  if (valid) require_same(pred, *valid, "confusion mask");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (valid && !valid->px[i]) continue;
    const bool p = pred.px[i], y = target.px[i];
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

BasicMetrics basic_metrics(const ConfusionCounts& c) {
  BasicMetrics m;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  m.acc = ratio(tp + tn, tp + tn + fp + fn, "acc", m.undefined);
  m.se = ratio(tp, tp + fn, "se", m.undefined);
  m.sp = ratio(tn, tn + fp, "sp", m.undefined);
  m.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn, "f1", m.undefined);
  m.miou = ratio(tp, tp + fp + fn, "miou", m.undefined);
  m.miou_paper_literal = ratio(2.0 * tp, tp + fp + fn, "miou_paper_literal", m.undefined);
  return m;
}

AucResult roc_auc(const Tensor& prob, const Mask& target, const Mask* valid) {
  std::size_t h, w;
  plane_dims(prob, h, w);
  if (h != target.height || w != target.width)
    throw DimensionError("roc_auc: probability map " + to_string(prob.shape()) + " vs target " +
                         std::to_string(target.height) + "x" + std::to_string(target.width));
  if (valid) require_same(target, *valid, "roc_auc mask");

  std::vector<std::pair<double, std::uint8_t>> s;
  s.reserve(target.size());
  for (std::size_t i = 0; i < target.size(); ++i)
    if (!valid || valid->px[i]) s.emplace_back(prob[i], target.px[i]);
  double npos = 0;
  for (const auto& e : s) npos += e.second;
  const double nneg = static_cast<double>(s.size()) - npos;
  if (npos == 0 || nneg == 0) return {0.5, false};

  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j].first == s[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (s[k].second) rank_sum += midrank;
    i = j;
  }
  return {(rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg), true};
}

std::vector<double> squared_distance_transform(const Mask& m) {
  const std::size_t h = m.height, w = m.width;
  std::vector<double> out(m.size(), std::numeric_limits<double>::infinity());
  if (m.empty()) return out;
  std::vector<double> grid(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) grid[i] = m.px[i] ? 0.0 : kFar;

  std::vector<std::size_t> v;
  std::vector<double> z, f(std::max(h, w)), d(std::max(h, w));
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
    edt_1d(f.data(), h, d.data(), v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    edt_1d(&grid[y * w], w, d.data(), v, z);
    std::copy(d.begin(), d.begin() + static_cast<long>(w), out.begin() + static_cast<long>(y * w));
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty list");
  if (q < 0.0 || q > 100.0) throw std::invalid_argument("percentile rank must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double hd95(const Mask& a, const Mask& b) {
  require_same(a, b, "hd95");
  if (a.empty() || b.empty()) throw EmptyMaskError("hd95 is undefined for an empty mask");
  const double ab = directed_hd95(a, squared_distance_transform(b));
  const double ba = directed_hd95(b, squared_distance_transform(a));
  return std::max(ab, ba);
}

Mask dilate_disc(const Mask& m, int radius) {
  if (radius < 0) throw std::invalid_argument("dilation radius must be nonnegative");
  std::vector<std::pair<int, int>> offs;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offs.emplace_back(dy, dx);
  Mask out(m.height, m.width);
  const long h = static_cast<long>(m.height), w = static_cast<long>(m.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!m.px[static_cast<std::size_t>(y * w + x)]) continue;
      for (auto [dy, dx] : offs) {
        const long yy = y + dy, xx = x + dx;
        if (yy >= 0 && xx >= 0 && yy < h && xx < w) out.px[static_cast<std::size_t>(yy * w + xx)] = 1;
      }
    }
  return out;
}

Mask skeletonize(const Mask& m) {
  Mask s = m;
  std::vector<std::size_t> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t x = 0; x < s.width; ++x) {
          if (!s.at(y, x)) continue;
          const auto p = neighbours(s, y, x);
          const int b = std::accumulate(p.begin(), p.end(), 0);
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int i = 0; i < 8; ++i) a += (p[i] == 0 && p[(i + 1) % 8] == 1);
          if (a != 1) continue;
          // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
          if (pass == 0) {
            if (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0) continue;
          } else {
            if (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0) continue;
          }
          marked.push_back(y * s.width + x);
        }
      for (std::size_t idx : marked) {
        const std::size_t y = idx / s.width, x = idx % s.width;
        if (!simple_point(neighbours(s, y, x))) continue;
        s.px[idx] = 0;
        changed = true;
      }
    }
  }
  return s;
}

std::size_t label_components(const Mask& m, std::vector<std::uint32_t>* labels) {
  std::vector<std::uint32_t> lab(m.size(), 0);
  std::vector<std::size_t> stack;
  std::uint32_t n = 0;
  const long h = static_cast<long>(m.height), w = static_cast<long>(m.width);
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m.px[start] || lab[start]) continue;
    lab[start] = ++n;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const long y = static_cast<long>(i) / w, x = static_cast<long>(i) % w;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          const auto j = static_cast<std::size_t>(yy * w + xx);
          if (m.px[j] && !lab[j]) {
            lab[j] = n;
            stack.push_back(j);
          }
        }
    }
  }
  if (labels) *labels = std::move(lab);
  return n;
}

CalMetrics cal_metrics(const Mask& pred, const Mask& target, int alpha, int beta) {
  require_same(pred, target, "cal_metrics");
  const std::size_t n_target = target.count();
  if (n_target == 0) throw EmptyMaskError("connectivity/area/length are undefined for an empty target");

  CalMetrics r;
  const double dc = std::abs(static_cast<double>(label_components(target)) -
                             static_cast<double>(label_components(pred)));
  r.c = 1.0 - std::min(1.0, dc / static_cast<double>(n_target));

  // #((x & dil(y)) | (dil(x) & y)) / #(x | y)
  auto tolerant_overlap = [](const Mask& x, const Mask& y, int radius) {
    const Mask dx = dilate_disc(x, radius), dy = dilate_disc(y, radius);
    std::size_t num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += (x.px[i] && dy.px[i]) || (dx.px[i] && y.px[i]);
      den += x.px[i] || y.px[i];
    }
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  r.a = tolerant_overlap(pred, target, alpha);
  r.l = tolerant_overlap(skeletonize(pred), skeletonize(target), beta);
  r.f = r.c * r.a * r.l;
  return r;
}

const std::vector<std::string>& MetricsReport::keys() {
  static const std::vector<std::string> k{"acc", "se", "sp",   "f1", "miou", "miou_paper_literal",
                                          "auc", "hd95", "c", "a",  "l",    "f"};
  return k;
}

nlohmann::json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = nlohmann::json::object();
  j["acc"] = acc;
  j["se"] = se;
  j["sp"] = sp;
  j["f1"] = f1;
  j["miou"] = miou;
  j["miou_paper_literal"] = miou_paper_literal;
  j["auc"] = auc;
  j["hd95"] = opt(hd95);
  j["c"] = opt(c);
  j["a"] = opt(a);
  j["l"] = opt(l);
  j["f"] = opt(f);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  auto opt = [&j](const char* k) -> std::optional<double> {
    if (j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  MetricsReport r;
  r.acc = j.at("acc").get<double>();
  r.se = j.at("se").get<double>();
  r.sp = j.at("sp").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.miou = j.at("miou").get<double>();
  r.miou_paper_literal = j.at("miou_paper_literal").get<double>();
  r.auc = j.at("auc").get<double>();
  r.hd95 = opt("hd95");
  r.c = opt("c");
  r.a = opt("a");
  r.l = opt("l");
  r.f = opt("f");
  return r;
}

MetricsReport full_report(const Tensor& prob, const Mask& target, const Mask* valid, double threshold) {
  Mask pred = Mask::from_tensor(prob, threshold);
  require_same(pred, target, "full_report");
  Mask gt = target;
  if (valid) {
    require_same(pred, *valid, "full_report mask");
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (!valid->px[i]) pred.px[i] = gt.px[i] = 0;
  }
  const BasicMetrics b = basic_metrics(confusion(pred, gt, valid));
  MetricsReport r;
  r.acc = b.acc;
  r.se = b.se;
  r.sp = b.sp;
  r.f1 = b.f1;
  r.miou = b.miou;
  r.miou_paper_literal = b.miou_paper_literal;
  r.auc = roc_auc(prob, gt, valid).value;
  if (!pred.empty() && !gt.empty()) r.hd95 = hd95(pred, gt);
  if (!gt.empty()) {
    const CalMetrics cm = cal_metrics(pred, gt);
    r.c = cm.c;
    r.a = cm.a;
    r.l = cm.l;
    r.f = cm.f;
  }
  return r;
}

}  // namespace attukan::metrics
