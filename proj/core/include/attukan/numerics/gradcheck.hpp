#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attukan/numerics/param_store.hpp"
#include "attukan/numerics/tape.hpp"

namespace attukan {

/// Builds a scalar loss on the tape from the parameters in the store.
using ScalarObjective = std::function<Var(GradTape&, ParamStore&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// An element whose error exceeds a tenth of the tolerance is re-measured
  /// with eps / refine_factor
  /// and keeps the better agreement; a step can straddle a ReLU or pooling
  /// kink that a smaller one avoids. 0 disables the retry.
  double refine_factor = 10.0;
  double tolerance = 1e-4;
  /// Elements with |analytic - numeric| at or below this agree outright. It
  /// sits at the roundoff floor of a central difference of an O(1)
  /// objective, below which a relative error carries no information (e.g. a
  /// bias feeding batch norm has an exactly zero gradient).
  double abs_tolerance = 1e-9;
  /// 0 checks every element; otherwise a seeded random subset per entry.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Elements that missed tolerance while the base evaluation sat on a
  /// non-differentiable point (tie, clamp, ReLU at zero).
  std::size_t nondifferentiable = 0;
  /// Elements that agreed on the absolute floor.
  std::size_t within_floor = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  std::vector<std::string> kinks;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

/// Compares tape gradients with central differences (f(θ+eps) - f(θ-eps)) / 2eps
/// for every trainable entry. Buffers are restored afterwards.
/// Throws std::domain_error if the objective is not finite.
GradCheckReport finite_diff_check(const ScalarObjective& f, ParamStore& store,
                                  const GradCheckOptions& opts = {});

}  // namespace attukan
