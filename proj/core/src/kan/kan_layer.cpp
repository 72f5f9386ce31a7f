#include "attukan/kan/kan_layer.hpp"

#include <cmath>
#include <vector>

#include "attukan/numerics/init.hpp"

namespace attukan::kan {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Effective per-edge coefficients w_s[p,q] * c[p,q,i], laid out [P][K][Q] so
// the innermost loop runs over outputs.
std::vector<double> effective_coeff(const Tensor& c, const Tensor& ws, std::size_t P,
                                    std::size_t Q, std::size_t K) {
  std::vector<double> eff(P * K * Q);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      const double w = ws[p * Q + q];
      for (std::size_t i = 0; i < K; ++i) eff[(p * K + i) * Q + q] = w * c[(p * Q + q) * K + i];
    }
  return eff;
}

}  // namespace

void register_kan_layer(ParamStore& store, const std::string& prefix, std::size_t n_in,
                        std::size_t n_out, const SplineSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t K = spec.basis_size();
  store.add(prefix + ".coeff", uniform_init({n_in, n_out, K}, 0.1, seed, prefix + ".coeff"));
  store.add(prefix + ".base_weight",
            uniform_init({n_in, n_out}, 1.0 / std::sqrt(static_cast<double>(n_in)), seed,
                         prefix + ".base_weight"));
  store.add(prefix + ".spline_weight", Tensor({n_in, n_out}, 1.0));
}

KanLayerParams bind_kan_layer(GradTape& tape, ParamStore& store, const std::string& prefix) {
  return {tape.parameter(store, prefix + ".coeff"), tape.parameter(store, prefix + ".base_weight"),
          tape.parameter(store, prefix + ".spline_weight")};
}

Var kan_layer_forward(GradTape& tape, Var x, const KanLayerParams& params, const SplineSpec& spec) {
  spec.validate();
  const Tensor& xv = tape.value(x);
  const Tensor& c = tape.value(params.coeff);
  const Tensor& wb = tape.value(params.base_weight);
  const Tensor& ws = tape.value(params.spline_weight);
  require_rank(xv, 2, "kan_layer input");
  require_rank(c, 3, "kan_layer coeff");
  const std::size_t R = xv.dim(0), P = xv.dim(1);
  if (c.dim(0) != P)
    throw DimensionError("kan_layer: input has " + std::to_string(P) + " features, layer expects " +
                         std::to_string(c.dim(0)));
  const std::size_t Q = c.dim(1), K = spec.basis_size();
  require_shape(c, {P, Q, K}, "kan_layer coeff");
  require_shape(wb, {P, Q}, "kan_layer base_weight");
  require_shape(ws, {P, Q}, "kan_layer spline_weight");
  const std::size_t nk = static_cast<std::size_t>(spec.order) + 1;

  const auto eff = effective_coeff(c, ws, P, Q, K);
  Tensor out({R, Q});
  const double tol = tape.kink_tolerance();
  bool kink = false;
  for (std::size_t r = 0; r < R; ++r) {
    double* y = out.ptr() + r * Q;
    for (std::size_t p = 0; p < P; ++p) {
      const double xi = xv[r * P + p];
      if (tol >= 0.0 &&
          (std::abs(xi - spec.grid_min) <= tol || std::abs(xi - spec.grid_max) <= tol))
        kink = true;
      const double s = xi * sigmoid(xi);
      const double* wrow = wb.ptr() + p * Q;
      for (std::size_t q = 0; q < Q; ++q) y[q] += s * wrow[q];
      const BasisWindow bw = bspline_window(xi, spec);
      for (std::size_t j = 0; j < nk; ++j) {
        const double bval = bw.value[j];
        if (bval == 0.0) continue;
        const double* crow = eff.data() + (p * K + bw.start + j) * Q;
        for (std::size_t q = 0; q < Q; ++q) y[q] += bval * crow[q];
      }
    }
  }
  if (kink) tape.flag_kink("kan_layer_clamp");

  return tape.record(
      std::move(out), {x, params.coeff, params.base_weight, params.spline_weight},
      [spec, R, P, Q, K, nk](const BackwardArgs& a) {
        const Tensor& xv = a.input(0);
        const Tensor& c = a.input(1);
        const Tensor& wb = a.input(2);
        const Tensor& ws = a.input(3);
        Tensor* gx = a.in_grads[0];
        Tensor* gc = a.in_grads[1];
        Tensor* gwb = a.in_grads[2];
        Tensor* gws = a.in_grads[3];
        const auto eff = effective_coeff(c, ws, P, Q, K);
        std::vector<double> geff((gc || gws) ? P * K * Q : 0, 0.0);
        for (std::size_t r = 0; r < R; ++r) {
          const double* dy = a.out_grad.ptr() + r * Q;
          for (std::size_t p = 0; p < P; ++p) {
            const double xi = xv[r * P + p];
            const double sg = sigmoid(xi);
            const double s = xi * sg;
            const BasisWindow bw = bspline_window(xi, spec);
            if (gwb) {
              double* g = gwb->ptr() + p * Q;
              for (std::size_t q = 0; q < Q; ++q) g[q] += s * dy[q];
            }
            if (!geff.empty()) {
              for (std::size_t j = 0; j < nk; ++j) {
                const double bval = bw.value[j];
                if (bval == 0.0) continue;
                double* g = geff.data() + (p * K + bw.start + j) * Q;
                for (std::size_t q = 0; q < Q; ++q) g[q] += bval * dy[q];
              }
            }
            if (gx) {
              const double ds = sg + xi * sg * (1.0 - sg);
              const double* wrow = wb.ptr() + p * Q;
              double acc = 0.0;
              for (std::size_t q = 0; q < Q; ++q) acc += dy[q] * wrow[q];
              acc *= ds;
              if (!bw.clamped) {
                for (std::size_t j = 0; j < nk; ++j) {
                  const double d = bw.deriv[j];
                  if (d == 0.0) continue;
                  const double* crow = eff.data() + (p * K + bw.start + j) * Q;
                  double dot = 0.0;
                  for (std::size_t q = 0; q < Q; ++q) dot += dy[q] * crow[q];
                  acc += d * dot;
                }
              }
              (*gx)[r * P + p] += acc;
            }
          }
        }
        if (geff.empty()) return;
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t q = 0; q < Q; ++q) {
            const double w = ws[p * Q + q];
            double sw = 0.0;
            for (std::size_t i = 0; i < K; ++i) {
              const double g = geff[(p * K + i) * Q + q];
              if (gc) (*gc)[(p * Q + q) * K + i] += w * g;
              sw += c[(p * Q + q) * K + i] * g;
            }
            if (gws) (*gws)[p * Q + q] += sw;
          }
      },
      "kan_layer");
}

}  // namespace attukan::kan
