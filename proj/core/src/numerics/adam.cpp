#include "attukan/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace attukan {

void adam_step(ParamStore& store, const AdamOptions& opts) {
  if (!(opts.lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (opts.beta1 < 0.0 || opts.beta1 >= 1.0 || opts.beta2 < 0.0 || opts.beta2 >= 1.0)
    throw std::invalid_argument("adam_step: betas must lie in [0, 1)");
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    ++e.step;
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(e.step));
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      const double m = opts.beta1 * e.m[i] + (1.0 - opts.beta1) * g;
      const double v = opts.beta2 * e.v[i] + (1.0 - opts.beta2) * g * g;
      e.m[i] = static_cast<float>(m);
      e.v[i] = static_cast<float>(v);
      const double update = opts.lr * (m / bc1) / (std::sqrt(v / bc2) + opts.eps);
      e.value[i] = static_cast<float>(e.value[i] - update);
    }
  }
}

}  // namespace attukan
