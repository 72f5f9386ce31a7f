#include "attukan/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "attukan/numerics/ops.hpp"

namespace attukan::losses {

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3, lambda4})
    if (!std::isfinite(l) || l < 0.0)
      throw std::invalid_argument("loss weights must be finite and nonnegative");
}

const char* to_string(LpclMode m) { return m == LpclMode::label_masked ? "label_masked" : "view_only"; }

LpclMode parse_lpcl_mode(const std::string& s) {
  if (s == "label_masked") return LpclMode::label_masked;
  if (s == "view_only") return LpclMode::view_only;
  throw std::invalid_argument("unknown lpcl mode '" + s + "' (expected label_masked or view_only)");
}

std::vector<std::size_t> adjacent_pairing(std::size_t views) {
  std::vector<std::size_t> p(views);
  for (std::size_t i = 0; i < views; ++i) p[i] = i ^ 1u;
  if (views % 2 == 1) p[views - 1] = views - 1;
  return p;
}

Tensor downsample_labels(const Tensor& labels, std::size_t size) {
  std::size_t b, h, w;
  if (labels.rank() == 3) {
    b = labels.dim(0), h = labels.dim(1), w = labels.dim(2);
  } else if (labels.rank() == 4 && labels.dim(1) == 1) {
    b = labels.dim(0), h = labels.dim(2), w = labels.dim(3);
  } else {
    throw DimensionError("downsample_labels expects [B,H,W] or [B,1,H,W], got " +
                         attukan::to_string(labels.shape()));
  }
  if (size == 0 || h % size != 0 || w % size != 0)
    throw DimensionError("downsample_labels: " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not a multiple of " + std::to_string(size));
  const std::size_t fh = h / size, fw = w / size;
  Tensor out({b, size, size});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) {
        double acc = 0.0;
        for (std::size_t y = 0; y < fh; ++y)
          for (std::size_t x = 0; x < fw; ++x) acc += labels[(n * h + i * fh + y) * w + j * fw + x];
        out[(n * size + i) * size + j] = acc / static_cast<double>(fh * fw) >= 0.5 ? 1.0 : 0.0;
      }
  return out;
}

namespace {

void require_same(const Tensor& p, const Tensor& y, const char* what) {
  if (p.shape() != y.shape())
    throw DimensionError(std::string(what) + ": prediction " + attukan::to_string(p.shape()) + " vs target " +
                         attukan::to_string(y.shape()));
}

struct Overlap {
  double inter = 0.0, sp = 0.0, sy = 0.0;
};

Overlap overlap(const Tensor& p, const Tensor& y) {
  Overlap o;
  for (std::size_t i = 0; i < p.size(); ++i) {
    o.inter += p[i] * y[i];
    o.sp += p[i];
    o.sy += y[i];
  }
  return o;
}

}  // namespace

Var bce(GradTape& t, Var pred, const Tensor& target) {
  const Tensor& p = t.value(pred);
  require_same(p, target, "bce");
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
    acc -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  return t.record(Tensor::scalar(acc / n), {pred}, [target, n](const BackwardArgs& g) {
    const Tensor& p = g.input(0);
    auto& gp = *g.in_grads[0];
    const double go = g.out_grad[0] / n;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < kBceClamp || p[i] > 1.0 - kBceClamp) continue;
      gp[i] += go * (-target[i] / p[i] + (1.0 - target[i]) / (1.0 - p[i]));
    }
  }, "bce");
}

Var dice_loss(GradTape& t, Var pred, const Tensor& target) {
  const Tensor& p = t.value(pred);
  require_same(p, target, "dice_loss");
  const Overlap o = overlap(p, target);
  const double num = 2.0 * o.inter + kOverlapSmooth;
  const double den = o.sp + o.sy + kOverlapSmooth;
  return t.record(Tensor::scalar(1.0 - num / den), {pred}, [target, num, den](const BackwardArgs& g) {
    auto& gp = *g.in_grads[0];
    const double go = g.out_grad[0];
    for (std::size_t i = 0; i < gp.size(); ++i)
      gp[i] -= go * (2.0 * target[i] * den - num) / (den * den);
  }, "dice_loss");
}

Var jaccard_loss(GradTape& t, Var pred, const Tensor& target) {
  const Tensor& p = t.value(pred);
  require_same(p, target, "jaccard_loss");
  const Overlap o = overlap(p, target);
  const double num = o.inter + kOverlapSmooth;
  const double den = o.sp + o.sy - o.inter + kOverlapSmooth;
  return t.record(Tensor::scalar(1.0 - num / den), {pred}, [target, num, den](const BackwardArgs& g) {
    auto& gp = *g.in_grads[0];
    const double go = g.out_grad[0];
    for (std::size_t i = 0; i < gp.size(); ++i)
      gp[i] -= go * (target[i] * den - num * (1.0 - target[i])) / (den * den);
  }, "jaccard_loss");
}

namespace {

struct LpclGeom {
  std::size_t views, dim, loc;
};

// Unit feature vectors laid out [view][loc][dim], plus the original norms.
void normalise(const Tensor& f, const LpclGeom& g, std::vector<double>& z, std::vector<double>& norm) {
  z.assign(g.views * g.loc * g.dim, 0.0);
  norm.assign(g.views * g.loc, 0.0);
  for (std::size_t v = 0; v < g.views; ++v)
    for (std::size_t s = 0; s < g.loc; ++s) {
      double sq = 0.0;
      for (std::size_t d = 0; d < g.dim; ++d) {
        const double x = f[(v * g.dim + d) * g.loc + s];
        sq += x * x;
      }
      const double nrm = std::max(std::sqrt(sq), 1e-12);
      norm[v * g.loc + s] = nrm;
      double* zp = &z[(v * g.loc + s) * g.dim];
      for (std::size_t d = 0; d < g.dim; ++d) zp[d] = f[(v * g.dim + d) * g.loc + s] / nrm;
    }
}

bool has_positive(const std::vector<std::size_t>& pairing, std::size_t i) {
  return pairing[i] != i && pairing[i] < pairing.size();
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Var lpcl(GradTape& t, const ContrastiveBatch& batch, LpclMode mode) {
  const Tensor& f = t.value(batch.features);
  require_rank(f, 4, "lpcl features");
  if (f.dim(2) != f.dim(3))
    throw DimensionError("lpcl features must be square, got " + attukan::to_string(f.shape()));
  const LpclGeom geom{f.dim(0), f.dim(1), f.dim(2) * f.dim(3)};
  if (geom.views < 2) throw std::invalid_argument("lpcl needs at least two views");
  if (batch.view_pairing.size() != geom.views)
    throw std::invalid_argument("lpcl: view_pairing has " + std::to_string(batch.view_pairing.size()) +
                                " entries for " + std::to_string(geom.views) + " views");
  if (!(batch.tau > 0.0)) throw std::invalid_argument("lpcl: tau must be positive");
  const bool masked = mode == LpclMode::label_masked;
  if (masked) {
    const Shape want{geom.views, f.dim(2), f.dim(3)};
    if (batch.labels_ds.shape() != want)
      throw DimensionError("lpcl labels " + attukan::to_string(batch.labels_ds.shape()) + " vs expected " +
                           attukan::to_string(want));
  }

  const double tau = batch.tau;
  const double w = 1.0 / static_cast<double>(geom.loc);  // |positives| = 1
  const auto& pairing = batch.view_pairing;
  const Tensor labels = masked ? batch.labels_ds : Tensor::scalar(0);
  auto counts = [masked, &labels, &geom](std::size_t i, std::size_t j, std::size_t s) {
    return !masked || labels[i * geom.loc + s] == labels[j * geom.loc + s];
  };

  std::vector<double> z, norm;
  normalise(f, geom, z, norm);
  auto zv = [&z, &geom](std::size_t v, std::size_t s) { return &z[(v * geom.loc + s) * geom.dim]; };

  std::vector<double> logit(geom.views);
  double loss = 0.0;
  for (std::size_t i = 0; i < geom.views; ++i) {
    if (!has_positive(pairing, i)) continue;
    const std::size_t j = pairing[i];
    for (std::size_t s = 0; s < geom.loc; ++s) {
      if (!counts(i, j, s)) continue;
      double mx = -1e300;
      for (std::size_t k = 0; k < geom.views; ++k) {
        if (k == i) continue;
        logit[k] = dot(zv(i, s), zv(k, s), geom.dim) / tau;
        mx = std::max(mx, logit[k]);
      }
      double se = 0.0;
      for (std::size_t k = 0; k < geom.views; ++k)
        if (k != i) se += std::exp(logit[k] - mx);
      loss += w * (mx + std::log(se) - logit[j]);
    }
  }

  return t.record(
      Tensor::scalar(loss), {batch.features},
      [geom, tau, w, pairing, labels, masked](const BackwardArgs& g) {
        const Tensor& f = g.input(0);
        std::vector<double> z, norm;
        normalise(f, geom, z, norm);
        std::vector<double> dz(z.size(), 0.0);
        std::vector<double> logit(geom.views), p(geom.views);
        const double go = g.out_grad[0];
        for (std::size_t i = 0; i < geom.views; ++i) {
          if (!has_positive(pairing, i)) continue;
          const std::size_t j = pairing[i];
          for (std::size_t s = 0; s < geom.loc; ++s) {
            if (masked && labels[i * geom.loc + s] != labels[j * geom.loc + s]) continue;
            const double* zi = &z[(i * geom.loc + s) * geom.dim];
            double mx = -1e300;
            for (std::size_t k = 0; k < geom.views; ++k) {
              if (k == i) continue;
              logit[k] = dot(zi, &z[(k * geom.loc + s) * geom.dim], geom.dim) / tau;
              mx = std::max(mx, logit[k]);
            }
            double se = 0.0;
            for (std::size_t k = 0; k < geom.views; ++k)
              if (k != i) se += (p[k] = std::exp(logit[k] - mx));
            const double c = go * w / tau;
            double* dzi = &dz[(i * geom.loc + s) * geom.dim];
            for (std::size_t k = 0; k < geom.views; ++k) {
              if (k == i) continue;
              const double coef = c * (p[k] / se - (k == j ? 1.0 : 0.0));
              const double* zk = &z[(k * geom.loc + s) * geom.dim];
              double* dzk = &dz[(k * geom.loc + s) * geom.dim];
              for (std::size_t d = 0; d < geom.dim; ++d) {
                dzi[d] += coef * zk[d];
                dzk[d] += coef * zi[d];
              }
            }
          }
        }
        auto& gf = *g.in_grads[0];
        for (std::size_t v = 0; v < geom.views; ++v)
          for (std::size_t s = 0; s < geom.loc; ++s) {
            const double* zp = &z[(v * geom.loc + s) * geom.dim];
            const double* dp = &dz[(v * geom.loc + s) * geom.dim];
            const double proj = dot(zp, dp, geom.dim);
            const double inv = 1.0 / norm[v * geom.loc + s];
            for (std::size_t d = 0; d < geom.dim; ++d)
              gf[(v * geom.dim + d) * geom.loc + s] += (dp[d] - zp[d] * proj) * inv;
          }
      },
      "lpcl");
}

LossBreakdown hybrid_loss(GradTape& t, Var pred, const Tensor& target, const ContrastiveBatch* batch,
                          const LossWeights& w, LpclMode mode) {
  w.validate();
  std::vector<Var> terms{bce(t, pred, target), jaccard_loss(t, pred, target), dice_loss(t, pred, target)};
  std::vector<double> weights{w.lambda1, w.lambda2, w.lambda3};
  if (batch) {
    terms.push_back(lpcl(t, *batch, mode));
    weights.push_back(w.lambda4);
  }
  LossBreakdown r;
  r.total = ops::weighted_sum(t, terms, weights);
  r.bce = t.value(terms[0]).item();
  r.jaccard = t.value(terms[1]).item();
  r.dice = t.value(terms[2]).item();
  if (batch) r.lpcl = t.value(terms[3]).item();
  r.value = t.value(r.total).item();
  return r;
}

}  // namespace attukan::losses
