#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attukan/numerics/param_store.hpp"
#include "attukan/numerics/tensor.hpp"

namespace attukan {

/// Handle to a value recorded on a GradTape.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

class GradTape;

/// Arguments handed to a backward rule. `in_grads[i]` is null when input i
/// does not require a gradient; otherwise it is a zero-initialised (or
/// partially accumulated) buffer shaped like the input.
struct BackwardArgs {
  const GradTape& tape;
  std::span<const Var> inputs;
  const Tensor& out_value;
  const Tensor& out_grad;
  std::span<Tensor* const> in_grads;

  const Tensor& input(std::size_t i) const;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Append-only record of primitive operations.
///
/// Nodes are stored in creation order, which is a topological order of the
/// computation; `backward` walks it in reverse and visits each node once.
class GradTape {
 public:
  explicit GradTape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var constant(Tensor value);
  /// Leaf that requires a gradient; read it back with `grad` after backward.
  Var variable(Tensor value);
  /// Leaf bound to a ParamStore entry. Its gradient is accumulated into the
  /// entry's `grad` during backward. The store must outlive the tape and must
  /// not gain entries while the tape is alive.
  Var parameter(ParamStore& store, std::string_view name);

  /// Records an op output. `fn` is kept only if some input requires a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn, std::string_view op);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward pass; empty for nodes without one.
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::string_view op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Reverse-mode sweep from a scalar loss. Parameter gradients accumulate
  /// into their ParamStore entries across calls until zeroed there.
  void backward(Var loss);

  /// Non-differentiable points (ties, clamps, ReLU at zero) within this
  /// tolerance are reported through `flag_kink`. Negative disables tracking.
  void set_kink_tolerance(double tol) noexcept { kink_tol_ = tol; }
  double kink_tolerance() const noexcept { return kink_tol_; }
  void flag_kink(std::string_view op);
  const std::vector<std::string>& kinks() const noexcept { return kinks_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    std::string_view op;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
    bool requires_grad = false;
    bool keep_grad = false;
  };

  bool grad_enabled_;
  double kink_tol_ = -1.0;
  std::vector<Node> nodes_;
  std::vector<std::string> kinks_;
};

}  // namespace attukan
