#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace attukan::kan {

/// Uniform B-spline grid over [grid_min, grid_max] with `grid_count`
/// intervals, extended by `order` knots on each side. `order` is the
/// polynomial degree (3 = cubic); there are grid_count + order basis functions.
struct SplineSpec {
  double grid_min = -2.0;
  double grid_max = 2.0;
  int grid_count = 5;
  int order = 3;

  static constexpr int kMaxOrder = 7;

  /// Throws std::invalid_argument on an unusable grid.
  void validate() const;
  std::size_t basis_size() const { return static_cast<std::size_t>(grid_count + order); }
  double spacing() const { return (grid_max - grid_min) / grid_count; }
  double knot(int i) const { return grid_min + (i - order) * spacing(); }
  double clamp(double x) const;
};

/// Full basis vector B_0..B_{G+k-1} at x (clamped to the grid domain) via the
/// Cox-de Boor recursion over the whole knot vector.
std::vector<double> bspline_basis(double x, const SplineSpec& spec);

/// The k+1 possibly-nonzero basis values at x and their derivatives.
/// Entry j corresponds to basis index `start + j`. Derivatives are zero when
/// x lies outside the grid domain (clamped).
struct BasisWindow {
  std::size_t start = 0;
  std::array<double, SplineSpec::kMaxOrder + 1> value{};
  std::array<double, SplineSpec::kMaxOrder + 1> deriv{};
  bool clamped = false;
};

BasisWindow bspline_window(double x, const SplineSpec& spec);

}  // namespace attukan::kan
