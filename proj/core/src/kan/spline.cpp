#include "attukan/kan/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace attukan::kan {

void SplineSpec::validate() const {
  if (!(grid_min < grid_max)) throw std::invalid_argument("spline grid requires grid_min < grid_max");
  if (grid_count < 1) throw std::invalid_argument("spline grid_count must be >= 1");
  if (order < 1 || order > kMaxOrder)
    throw std::invalid_argument("spline order must lie in [1, " + std::to_string(kMaxOrder) + "]");
  if (!std::isfinite(grid_min) || !std::isfinite(grid_max))
    throw std::invalid_argument("spline grid bounds must be finite");
}

double SplineSpec::clamp(double x) const { return std::clamp(x, grid_min, grid_max); }

std::vector<double> bspline_basis(double x, const SplineSpec& spec) {
  spec.validate();
  const double xc = spec.clamp(x);
  const int k = spec.order;
  const int n_knots = spec.grid_count + 2 * k + 1;
  // Degree-0 indicators on half-open knot intervals.
  std::vector<double> b(static_cast<std::size_t>(n_knots - 1), 0.0);
  for (int i = 0; i + 1 < n_knots; ++i)
    if (spec.knot(i) <= xc && xc < spec.knot(i + 1)) b[static_cast<std::size_t>(i)] = 1.0;
  for (int d = 1; d <= k; ++d) {
    for (int i = 0; i + d + 1 < n_knots; ++i) {
      const double ti = spec.knot(i), tid = spec.knot(i + d);
      const double ti1 = spec.knot(i + 1), tid1 = spec.knot(i + d + 1);
      const auto u = static_cast<std::size_t>(i);
      b[u] = (xc - ti) / (tid - ti) * b[u] + (tid1 - xc) / (tid1 - ti1) * b[u + 1];
    }
  }
  b.resize(spec.basis_size());
  return b;
}

namespace {

// Nonzero basis values of degree `deg` on knot span `span` (t_span <= x < t_span+1),
// i.e. N_{span-deg}..N_{span}.
void local_basis(double x, int span, int deg, const SplineSpec& spec, double* out) {
  std::array<double, SplineSpec::kMaxOrder + 2> left{}, right{};
  out[0] = 1.0;
  for (int r = 1; r <= deg; ++r) {
    left[r] = x - spec.knot(span + 1 - r);
    right[r] = spec.knot(span + r) - x;
    double saved = 0.0;
    for (int s = 0; s < r; ++s) {
      const double tmp = out[s] / (right[s + 1] + left[r - s]);
      out[s] = saved + right[s + 1] * tmp;
      saved = left[r - s] * tmp;
    }
    out[r] = saved;
  }
}

}  // namespace

BasisWindow bspline_window(double x, const SplineSpec& spec) {
  const int k = spec.order;
  BasisWindow w;
  w.clamped = x < spec.grid_min || x > spec.grid_max;
  const double xc = spec.clamp(x);
  const double h = spec.spacing();
  int span = k + static_cast<int>(std::floor((xc - spec.grid_min) / h));
  span = std::clamp(span, k, spec.grid_count + k - 1);
  w.start = static_cast<std::size_t>(span - k);
  local_basis(xc, span, k, spec, w.value.data());
  if (!w.clamped) {
    // dN_i^k/dx = (N_i^{k-1} - N_{i+1}^{k-1}) / h on a uniform grid.
    std::array<double, SplineSpec::kMaxOrder + 2> lower{};
    local_basis(xc, span, k - 1, spec, lower.data() + 1);  // N_{span-k+1}..N_{span}
    for (int j = 0; j <= k; ++j) w.deriv[static_cast<std::size_t>(j)] = (lower[j] - lower[j + 1]) / h;
  }
  return w;
}

}  // namespace attukan::kan
