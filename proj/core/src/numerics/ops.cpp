#include "attukan/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace attukan::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct Dims4 {
  std::size_t b, c, h, w;
};

Dims4 dims4(const Tensor& x, const char* what) {
  require_rank(x, 4, what);
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

float round_f32(double v) { return static_cast<float>(v); }

}  // namespace

Var add(GradTape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape() != bv.shape())
    throw DimensionError("add: " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  Tensor out = av;
  out.add_(bv);
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    for (auto* ig : g.in_grads)
      if (ig) ig->add_(g.out_grad);
  }, "add");
}

Var mul(GradTape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape() != bv.shape())
    throw DimensionError("mul: " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    const Tensor& a = g.input(0);
    const Tensor& b = g.input(1);
    if (auto* ga = g.in_grads[0])
      for (std::size_t i = 0; i < a.size(); ++i) (*ga)[i] += g.out_grad[i] * b[i];
    if (auto* gb = g.in_grads[1])
      for (std::size_t i = 0; i < a.size(); ++i) (*gb)[i] += g.out_grad[i] * a[i];
  }, "mul");
}

Var scale(GradTape& t, Var a, double c) {
  Tensor out = t.value(a);
  for (auto& v : out.data()) v *= c;
  return t.record(std::move(out), {a}, [c](const BackwardArgs& g) {
    for (std::size_t i = 0; i < g.out_grad.size(); ++i) (*g.in_grads[0])[i] += c * g.out_grad[i];
  }, "scale");
}

Var relu(GradTape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out(xv.shape());
  const double tol = t.kink_tolerance();
  bool kink = false;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (tol >= 0.0 && std::abs(xv[i]) <= tol) kink = true;
  }
  if (kink) t.flag_kink("relu");
  return t.record(std::move(out), {x}, [](const BackwardArgs& g) {
    const Tensor& xv = g.input(0);
    auto& gx = *g.in_grads[0];
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g.out_grad[i];
  }, "relu");
}

Var sigmoid(GradTape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
  return t.record(std::move(out), {x}, [](const BackwardArgs& g) {
    auto& gx = *g.in_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = g.out_value[i];
      gx[i] += g.out_grad[i] * s * (1.0 - s);
    }
  }, "sigmoid");
}

Var silu(GradTape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * sigmoid_scalar(xv[i]);
  return t.record(std::move(out), {x}, [](const BackwardArgs& g) {
    const Tensor& xv = g.input(0);
    auto& gx = *g.in_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = sigmoid_scalar(xv[i]);
      gx[i] += g.out_grad[i] * (s + xv[i] * s * (1.0 - s));
    }
  }, "silu");
}

Var sum(GradTape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Tensor::scalar(s), {x}, [](const BackwardArgs& g) {
    const double go = g.out_grad[0];
    for (auto& v : g.in_grads[0]->data()) v += go;
  }, "sum");
}

Var mean(GradTape& t, Var x) {
  const Tensor& xv = t.value(x);
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const double n = static_cast<double>(xv.size());
  return t.record(Tensor::scalar(s / n), {x}, [n](const BackwardArgs& g) {
    const double go = g.out_grad[0] / n;
    for (auto& v : g.in_grads[0]->data()) v += go;
  }, "mean");
}

Var weighted_sum(GradTape& t, std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size())
    throw DimensionError("weighted_sum: term/weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * t.value(terms[i]).item();
  std::vector<double> w(weights.begin(), weights.end());
  return t.record(Tensor::scalar(s), std::vector<Var>(terms.begin(), terms.end()),
                  [w = std::move(w)](const BackwardArgs& g) {
                    for (std::size_t i = 0; i < w.size(); ++i)
                      if (auto* gi = g.in_grads[i]) (*gi)[0] += w[i] * g.out_grad[0];
                  },
                  "weighted_sum");
}

// ---------------------------------------------------------------- convolution

namespace {

struct ConvGeom {
  std::size_t c, h, w, kh, kw, ho, wo;
  int stride, pad;
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * plane;
        const double* xc = x + c * g.h * g.w;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(i);
          double* r = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(r, r + g.wo, 0.0);
            continue;
          }
          const double* xr = xc + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride - g.pad + static_cast<long>(j);
            r[ow] = (iw < 0 || iw >= static_cast<long>(g.w)) ? 0.0 : xr[iw];
          }
        }
      }
}

void col2im(const double* cols, const ConvGeom& g, double* dx) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * plane;
        double* dc = dx + c * g.h * g.w;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(i);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          const double* r = row + oh * g.wo;
          double* dr = dc + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride - g.pad + static_cast<long>(j);
            if (iw >= 0 && iw < static_cast<long>(g.w)) dr[iw] += r[ow];
          }
        }
      }
}

bool is_pointwise(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace

Var conv2d(GradTape& t, Var input, Var kernel, Var bias, int stride, int padding) {
  const Tensor& x = t.value(input);
  const Tensor& k = t.value(kernel);
  const auto [B, C, H, W] = dims4(x, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (k.dim(1) != C)
    throw DimensionError("conv2d: input has " + std::to_string(C) + " channels, kernel expects " +
                         std::to_string(k.dim(1)));
  if (stride < 1 || padding < 0) throw DimensionError("conv2d: invalid stride/padding");
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const long hp = static_cast<long>(H) + 2L * padding - static_cast<long>(KH);
  const long wp = static_cast<long>(W) + 2L * padding - static_cast<long>(KW);
  if (hp < 0 || wp < 0) throw DimensionError("conv2d: kernel larger than padded input");
  const ConvGeom g{C, H, W, KH, KW, static_cast<std::size_t>(hp / stride + 1),
                   static_cast<std::size_t>(wp / stride + 1), stride, padding};
  if (bias.valid()) require_shape(t.value(bias), {O}, "conv2d bias");

  const std::size_t plane = g.ho * g.wo;
  const std::size_t ckk = C * KH * KW;
  Tensor out({B, O, g.ho, g.wo});
  AlignedBuffer cols(is_pointwise(g) ? 0 : ckk * plane);
  CMapMat wmat(k.ptr(), O, ckk);
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = x.ptr() + b * C * H * W;
    const double* src = xb;
    if (!is_pointwise(g)) {
      im2col(xb, g, cols.data());
      src = cols.data();
    }
    MapMat ob(out.ptr() + b * O * plane, O, plane);
    ob.noalias() = wmat * CMapMat(src, ckk, plane);
    if (bias.valid()) {
      const Tensor& bv = t.value(bias);
      for (std::size_t o = 0; o < O; ++o) ob.row(o).array() += bv[o];
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias.valid()) inputs.push_back(bias);
  return t.record(std::move(out), std::move(inputs), [g, B, O, ckk, plane](const BackwardArgs& a) {
    const Tensor& x = a.input(0);
    const Tensor& k = a.input(1);
    const std::size_t in_sz = g.c * g.h * g.w;
    AlignedBuffer cols(is_pointwise(g) ? 0 : ckk * plane);
    CMapMat wmat(k.ptr(), O, ckk);
    Tensor* gx = a.in_grads[0];
    Tensor* gk = a.in_grads[1];
    Tensor* gb = a.in_grads.size() > 2 ? a.in_grads[2] : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
      CMapMat go(a.out_grad.ptr() + b * O * plane, O, plane);
      if (gb)
        for (std::size_t o = 0; o < O; ++o) (*gb)[o] += go.row(o).sum();
      if (gk) {
        const double* src = x.ptr() + b * in_sz;
        if (!is_pointwise(g)) {
          im2col(src, g, cols.data());
          src = cols.data();
        }
        MapMat(gk->ptr(), O, ckk).noalias() += go * CMapMat(src, ckk, plane).transpose();
      }
      if (gx) {
        if (is_pointwise(g)) {
          MapMat(gx->ptr() + b * in_sz, ckk, plane).noalias() += wmat.transpose() * go;
        } else {
          MapMat(cols.data(), ckk, plane).noalias() = wmat.transpose() * go;
          col2im(cols.data(), g, gx->ptr() + b * in_sz);
        }
      }
    }
  }, "conv2d");
}

Var depthwise_conv3x3(GradTape& t, Var input, Var kernel, Var bias) {
  const Tensor& x = t.value(input);
  const auto [B, C, H, W] = dims4(x, "depthwise_conv3x3 input");
  require_shape(t.value(kernel), {C, 1, 3, 3}, "depthwise_conv3x3 kernel");
  require_shape(t.value(bias), {C}, "depthwise_conv3x3 bias");
  const Tensor& k = t.value(kernel);
  const Tensor& bv = t.value(bias);
  Tensor out({B, C, H, W});
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.ptr() + (b * C + c) * H * W;
      double* oc = out.ptr() + (b * C + c) * H * W;
      const double* kc = k.ptr() + c * 9;
      for (long i = 0; i < h; ++i)
        for (long j = 0; j < w; ++j) {
          double s = bv[c];
          for (long di = -1; di <= 1; ++di) {
            const long ii = i + di;
            if (ii < 0 || ii >= h) continue;
            for (long dj = -1; dj <= 1; ++dj) {
              const long jj = j + dj;
              if (jj < 0 || jj >= w) continue;
              s += kc[(di + 1) * 3 + (dj + 1)] * xc[ii * w + jj];
            }
          }
          oc[i * w + j] = s;
        }
    }
  return t.record(std::move(out), {input, kernel, bias}, [B, C, h, w](const BackwardArgs& a) {
    const Tensor& x = a.input(0);
    const Tensor& k = a.input(1);
    Tensor* gx = a.in_grads[0];
    Tensor* gk = a.in_grads[1];
    Tensor* gb = a.in_grads[2];
    const std::size_t hw = static_cast<std::size_t>(h * w);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = (b * C + c) * hw;
        const double* go = a.out_grad.ptr() + base;
        const double* xc = x.ptr() + base;
        const double* kc = k.ptr() + c * 9;
        for (long i = 0; i < h; ++i)
          for (long j = 0; j < w; ++j) {
            const double gv = go[i * w + j];
            if (gv == 0.0) continue;
            if (gb) (*gb)[c] += gv;
            for (long di = -1; di <= 1; ++di) {
              const long ii = i + di;
              if (ii < 0 || ii >= h) continue;
              for (long dj = -1; dj <= 1; ++dj) {
                const long jj = j + dj;
                if (jj < 0 || jj >= w) continue;
                const std::size_t kidx = static_cast<std::size_t>((di + 1) * 3 + (dj + 1));
                if (gk) (*gk)[c * 9 + kidx] += gv * xc[ii * w + jj];
                if (gx) (*gx)[base + static_cast<std::size_t>(ii * w + jj)] += gv * kc[kidx];
              }
            }
          }
      }
  }, "depthwise_conv3x3");
}

// -------------------------------------------------------------- resampling

Var max_pool2x2(GradTape& t, Var input) {
  const Tensor& x = t.value(input);
  const auto [B, C, H, W] = dims4(x, "max_pool2x2 input");
  if (H % 2 != 0 || W % 2 != 0)
    throw DimensionError("max_pool2x2: spatial dims must be even, got " + to_string(x.shape()));
  const std::size_t ho = H / 2, wo = W / 2;
  Tensor out({B, C, ho, wo});
  std::vector<std::uint32_t> arg(out.size());
  const double tol = t.kink_tolerance();
  bool kink = false;
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* xc = x.ptr() + p * H * W;
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        const std::size_t cand[4] = {2 * i * W + 2 * j, 2 * i * W + 2 * j + 1,
                                     (2 * i + 1) * W + 2 * j, (2 * i + 1) * W + 2 * j + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q)
          if (xc[cand[q]] > xc[best]) best = cand[q];
        if (tol >= 0.0)
          for (auto q : cand)
            if (q != best && xc[best] - xc[q] <= tol) kink = true;
        const std::size_t o = p * ho * wo + i * wo + j;
        out[o] = xc[best];
        arg[o] = static_cast<std::uint32_t>(p * H * W + best);
      }
  }
  if (kink) t.flag_kink("max_pool2x2");
  return t.record(std::move(out), {input}, [arg = std::move(arg)](const BackwardArgs& a) {
    auto& gx = *a.in_grads[0];
    for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += a.out_grad[o];
  }, "max_pool2x2");
}

namespace {
struct Lerp {
  std::size_t i0, i1;
  double w1;
};

std::vector<Lerp> upsample_table(std::size_t in) {
  std::vector<Lerp> tab(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    tab[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return tab;
}
}  // namespace

Var bilinear_upsample2x(GradTape& t, Var input) {
  const Tensor& x = t.value(input);
  const auto [B, C, H, W] = dims4(x, "bilinear_upsample2x input");
  const auto th = upsample_table(H);
  const auto tw = upsample_table(W);
  const std::size_t ho = 2 * H, wo = 2 * W;
  Tensor out({B, C, ho, wo});
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* xc = x.ptr() + p * H * W;
    double* oc = out.ptr() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      const auto& r = th[i];
      const double* x0 = xc + r.i0 * W;
      const double* x1 = xc + r.i1 * W;
      for (std::size_t j = 0; j < wo; ++j) {
        const auto& c = tw[j];
        const double top = x0[c.i0] + c.w1 * (x0[c.i1] - x0[c.i0]);
        const double bot = x1[c.i0] + c.w1 * (x1[c.i1] - x1[c.i0]);
        oc[i * wo + j] = top + r.w1 * (bot - top);
      }
    }
  }
  return t.record(std::move(out), {input}, [th, tw, B, C, H, W](const BackwardArgs& a) {
    auto& gx = *a.in_grads[0];
    const std::size_t ho = 2 * H, wo = 2 * W;
    for (std::size_t p = 0; p < B * C; ++p) {
      double* gc = gx.ptr() + p * H * W;
      const double* go = a.out_grad.ptr() + p * ho * wo;
      for (std::size_t i = 0; i < ho; ++i) {
        const auto& r = th[i];
        for (std::size_t j = 0; j < wo; ++j) {
          const auto& c = tw[j];
          const double g = go[i * wo + j];
          const double gt = g * (1.0 - r.w1), gbm = g * r.w1;
          gc[r.i0 * W + c.i0] += gt * (1.0 - c.w1);
          gc[r.i0 * W + c.i1] += gt * c.w1;
          gc[r.i1 * W + c.i0] += gbm * (1.0 - c.w1);
          gc[r.i1 * W + c.i1] += gbm * c.w1;
        }
      }
    }
  }, "bilinear_upsample2x");
}

// ----------------------------------------------------------- normalisation

Var batch_norm(GradTape& t, Var input, Var gamma, Var beta, Tensor& running_mean,
               Tensor& running_var, const BatchNormOptions& opts) {
  const Tensor& x = t.value(input);
  const auto [B, C, H, W] = dims4(x, "batch_norm input");
  require_shape(t.value(gamma), {C}, "batch_norm gamma");
  require_shape(t.value(beta), {C}, "batch_norm beta");
  require_shape(running_mean, {C}, "batch_norm running_mean");
  require_shape(running_var, {C}, "batch_norm running_var");
  const Tensor& gm = t.value(gamma);
  const Tensor& bt = t.value(beta);
  const std::size_t hw = H * W;
  const double n = static_cast<double>(B * hw);

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mu, var;
    if (opts.training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* xc = x.ptr() + (b * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += xc[i];
      }
      mu = s / n;
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* xc = x.ptr() + (b * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (xc[i] - mu) * (xc[i] - mu);
      }
      var = sq / n;
      const double unbiased = n > 1.0 ? sq / (n - 1.0) : var;
      running_mean[c] = round_f32((1.0 - opts.momentum) * running_mean[c] + opts.momentum * mu);
      running_var[c] =
          round_f32((1.0 - opts.momentum) * running_var[c] + opts.momentum * unbiased);
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + opts.eps);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t base = (b * C + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[base + i] - mu) * inv_std[c];
        xhat[base + i] = xh;
        out[base + i] = gm[c] * xh + bt[c];
      }
    }
  }
  const bool training = opts.training;
  return t.record(std::move(out), {input, gamma, beta},
                  [xhat = std::move(xhat), inv_std = std::move(inv_std), B, C, hw, n,
                   training](const BackwardArgs& a) {
    const Tensor& gm = a.input(1);
    Tensor* gx = a.in_grads[0];
    Tensor* gg = a.in_grads[1];
    Tensor* gbeta = a.in_grads[2];
    for (std::size_t c = 0; c < C; ++c) {
      double sdy = 0.0, sdyx = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = (b * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sdy += a.out_grad[base + i];
          sdyx += a.out_grad[base + i] * xhat[base + i];
        }
      }
      if (gg) (*gg)[c] += sdyx;
      if (gbeta) (*gbeta)[c] += sdy;
      if (!gx) continue;
      const double k = gm[c] * inv_std[c];
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = (b * C + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double dy = a.out_grad[base + i];
          (*gx)[base + i] += training ? k * (dy - sdy / n - xhat[base + i] * sdyx / n) : k * dy;
        }
      }
    }
  }, "batch_norm");
}

Var layer_norm(GradTape& t, Var input, Var gamma, Var beta, double eps) {
  const Tensor& x = t.value(input);
  const std::size_t D = x.shape().back();
  require_shape(t.value(gamma), {D}, "layer_norm gamma");
  require_shape(t.value(beta), {D}, "layer_norm beta");
  const Tensor& gm = t.value(gamma);
  const Tensor& bt = t.value(beta);
  const std::size_t rows = x.size() / D;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * D;
    double mu = 0.0;
    for (std::size_t d = 0; d < D; ++d) mu += xr[d];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) var += (xr[d] - mu) * (xr[d] - mu);
    var /= static_cast<double>(D);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t d = 0; d < D; ++d) {
      const double xh = (xr[d] - mu) * inv_std[r];
      xhat[r * D + d] = xh;
      out[r * D + d] = gm[d] * xh + bt[d];
    }
  }
  return t.record(std::move(out), {input, gamma, beta},
                  [xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                   D](const BackwardArgs& a) {
    const Tensor& gm = a.input(1);
    Tensor* gx = a.in_grads[0];
    Tensor* gg = a.in_grads[1];
    Tensor* gbeta = a.in_grads[2];
    const double nd = static_cast<double>(D);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* go = a.out_grad.ptr() + r * D;
      const double* xh = xhat.ptr() + r * D;
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double dxh = go[d] * gm[d];
        s1 += dxh;
        s2 += dxh * xh[d];
        if (gg) (*gg)[d] += go[d] * xh[d];
        if (gbeta) (*gbeta)[d] += go[d];
      }
      if (!gx) continue;
      for (std::size_t d = 0; d < D; ++d)
        (*gx)[r * D + d] += inv_std[r] * (go[d] * gm[d] - s1 / nd - xh[d] * s2 / nd);
    }
  }, "layer_norm");
}

// ------------------------------------------------------------------ tokens

Var to_tokens(GradTape& t, Var input) {
  const Tensor& x = t.value(input);
  const auto [B, C, H, W] = dims4(x, "to_tokens input");
  const std::size_t hw = H * W;
  Tensor out({B * hw, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x.ptr() + (b * C + c) * hw;
      for (std::size_t s = 0; s < hw; ++s) out[(b * hw + s) * C + c] = xc[s];
    }
  return t.record(std::move(out), {input}, [B, C, hw](const BackwardArgs& a) {
    auto& gx = *a.in_grads[0];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < hw; ++s)
          gx[(b * C + c) * hw + s] += a.out_grad[(b * hw + s) * C + c];
  }, "to_tokens");
}

Var from_tokens(GradTape& t, Var tokens, std::size_t batch, std::size_t height,
                std::size_t width) {
  const Tensor& x = t.value(tokens);
  require_rank(x, 2, "from_tokens tokens");
  const std::size_t hw = height * width;
  if (x.dim(0) != batch * hw)
    throw DimensionError("from_tokens: token count " + std::to_string(x.dim(0)) +
                         " does not match B*H*W = " + std::to_string(batch * hw));
  const std::size_t C = x.dim(1);
  Tensor out({batch, C, height, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < hw; ++s) out[(b * C + c) * hw + s] = x[(b * hw + s) * C + c];
  return t.record(std::move(out), {tokens}, [batch, C, hw](const BackwardArgs& a) {
    auto& gx = *a.in_grads[0];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < hw; ++s)
          gx[(b * hw + s) * C + c] += a.out_grad[(b * C + c) * hw + s];
  }, "from_tokens");
}

Var matmul(GradTape& t, Var a, Var b) { return linear(t, a, b, Var{}); }

Var linear(GradTape& t, Var x, Var weight, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(weight);
  require_rank(xv, 2, "linear input");
  require_rank(wv, 2, "linear weight");
  if (xv.dim(1) != wv.dim(0))
    throw DimensionError("linear: input " + to_string(xv.shape()) + " vs weight " +
                         to_string(wv.shape()));
  const std::size_t n = xv.dim(0), k = wv.dim(0), m = wv.dim(1);
  Tensor out({n, m});
  MapMat om(out.ptr(), n, m);
  om.noalias() = CMapMat(xv.ptr(), n, k) * CMapMat(wv.ptr(), k, m);
  std::vector<Var> inputs{x, weight};
  if (bias.valid()) {
    const Tensor& bv = t.value(bias);
    require_shape(bv, {m}, "linear bias");
    om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.ptr(), m);
    inputs.push_back(bias);
  }
  return t.record(std::move(out), std::move(inputs), [n, k, m](const BackwardArgs& a) {
    CMapMat go(a.out_grad.ptr(), n, m);
    if (auto* gx = a.in_grads[0])
      MapMat(gx->ptr(), n, k).noalias() += go * CMapMat(a.input(1).ptr(), k, m).transpose();
    if (auto* gw = a.in_grads[1])
      MapMat(gw->ptr(), k, m).noalias() += CMapMat(a.input(0).ptr(), n, k).transpose() * go;
    if (a.in_grads.size() > 2 && a.in_grads[2]) {
      auto& gb = *a.in_grads[2];
      for (std::size_t j = 0; j < m; ++j) gb[j] += go.col(j).sum();
    }
  }, "linear");
}

// ---------------------------------------------------------- channel algebra

Var concat_channels(GradTape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const auto da = dims4(av, "concat_channels first");
  const auto db = dims4(bv, "concat_channels second");
  if (da.b != db.b || da.h != db.h || da.w != db.w)
    throw DimensionError("concat_channels: " + to_string(av.shape()) + " vs " +
                         to_string(bv.shape()));
  const std::size_t hw = da.h * da.w, C = da.c + db.c;
  Tensor out({da.b, C, da.h, da.w});
  for (std::size_t n = 0; n < da.b; ++n) {
    std::copy_n(av.ptr() + n * da.c * hw, da.c * hw, out.ptr() + n * C * hw);
    std::copy_n(bv.ptr() + n * db.c * hw, db.c * hw, out.ptr() + (n * C + da.c) * hw);
  }
  return t.record(std::move(out), {a, b}, [da, db, hw, C](const BackwardArgs& g) {
    for (std::size_t n = 0; n < da.b; ++n) {
      if (auto* ga = g.in_grads[0]) {
        const double* src = g.out_grad.ptr() + n * C * hw;
        double* dst = ga->ptr() + n * da.c * hw;
        for (std::size_t i = 0; i < da.c * hw; ++i) dst[i] += src[i];
      }
      if (auto* gb = g.in_grads[1]) {
        const double* src = g.out_grad.ptr() + (n * C + da.c) * hw;
        double* dst = gb->ptr() + n * db.c * hw;
        for (std::size_t i = 0; i < db.c * hw; ++i) dst[i] += src[i];
      }
    }
  }, "concat_channels");
}

Var mul_channel_broadcast(GradTape& t, Var x, Var alpha) {
  const Tensor& xv = t.value(x);
  const Tensor& av = t.value(alpha);
  const auto [B, C, H, W] = dims4(xv, "mul_channel_broadcast input");
  require_shape(av, {B, 1, H, W}, "mul_channel_broadcast alpha");
  const std::size_t hw = H * W;
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < hw; ++s)
        out[(b * C + c) * hw + s] = xv[(b * C + c) * hw + s] * av[b * hw + s];
  return t.record(std::move(out), {x, alpha}, [B, C, hw](const BackwardArgs& g) {
    const Tensor& xv = g.input(0);
    const Tensor& av = g.input(1);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < hw; ++s) {
          const std::size_t i = (b * C + c) * hw + s;
          if (auto* gx = g.in_grads[0]) (*gx)[i] += g.out_grad[i] * av[b * hw + s];
          if (auto* ga = g.in_grads[1]) (*ga)[b * hw + s] += g.out_grad[i] * xv[i];
        }
  }, "mul_channel_broadcast");
}

}  // namespace attukan::ops
