#include "attukan/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace attukan {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

double evaluate(const ScalarObjective& f, ParamStore& store) {
  GradTape tape(false);
  const double v = tape.value(f(tape, store)).item();
  if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarObjective& f, ParamStore& store,
                                  const GradCheckOptions& opts) {
  std::vector<Tensor> buffers;
  for (const auto& e : store.entries())
    if (!e.trainable) buffers.push_back(e.value);

  store.zero_grad();
  GradCheckReport report;
  {
    GradTape tape;
    tape.set_kink_tolerance(opts.eps);
    Var loss = f(tape, store);
    if (!std::isfinite(tape.value(loss).item()))
      throw std::domain_error("finite_diff_check: objective is not finite");
    tape.backward(loss);
    report.kinks = tape.kinks();
  }

  std::mt19937_64 rng(opts.seed);
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    ParamCheck pc;
    pc.name = e.name;
    std::vector<std::size_t> idx(e.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_elements_per_param > 0 && idx.size() > opts.max_elements_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_elements_per_param);
      std::sort(idx.begin(), idx.end());
    }
    auto central = [&](std::size_t i, double h) {
      const double orig = e.value[i];
      e.value[i] = orig + h;
      const double fp = evaluate(f, store);
      e.value[i] = orig - h;
      const double fm = evaluate(f, store);
      e.value[i] = orig;
      return (fp - fm) / (2.0 * h);
    };
    for (std::size_t i : idx) {
      const double numeric = central(i, opts.eps);
      ++pc.checked;
      if (std::abs(numeric - e.grad[i]) <= opts.abs_tolerance) {
        ++pc.within_floor;
        continue;
      }
      double err = relative_error(numeric, e.grad[i]);
      if (err > 0.1 * opts.tolerance && opts.refine_factor > 1.0)
        err = std::min(err, relative_error(central(i, opts.eps / opts.refine_factor), e.grad[i]));
      if (err > opts.tolerance && !report.kinks.empty()) {
        ++pc.nondifferentiable;
        continue;
      }
      pc.max_rel_error = std::max(pc.max_rel_error, err);
    }
    pc.passed = pc.max_rel_error <= opts.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.passed = report.passed && pc.passed;
    report.params.push_back(std::move(pc));
  }

  std::size_t b = 0;
  for (auto& e : store.entries())
    if (!e.trainable) e.value = buffers[b++];
  return report;
}

}  // namespace attukan
