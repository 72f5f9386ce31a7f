#include "attukan/numerics/tape.hpp"

#include <algorithm>
#include <stdexcept>

namespace attukan {

const Tensor& BackwardArgs::input(std::size_t i) const { return tape.value(inputs[i]); }

Var GradTape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var GradTape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "variable";
  n.requires_grad = grad_enabled_;
  n.keep_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var GradTape::parameter(ParamStore& store, std::string_view name) {
  const std::size_t idx = store.index_of(name);
  Node n;
  n.value = store.entry(idx).value;
  n.op = "parameter";
  n.requires_grad = grad_enabled_ && store.entry(idx).trainable;
  n.keep_grad = true;
  n.store = &store;
  n.param_index = idx;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var GradTape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn, std::string_view op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    for (Var v : inputs)
      if (nodes_.at(v.id).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void GradTape::flag_kink(std::string_view op) {
  if (std::find(kinks_.begin(), kinks_.end(), op) == kinks_.end()) kinks_.emplace_back(op);
}

void GradTape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1)
    throw DimensionError("backward requires a scalar loss, got shape " +
                         to_string(root.value.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);

  std::vector<Tensor*> in_grads;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) {
      in_grads.assign(n.inputs.size(), nullptr);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& in = nodes_[n.inputs[k].id];
        if (!in.requires_grad) continue;
        if (in.grad.empty()) in.grad = Tensor::zeros_like(in.value);
        in_grads[k] = &in.grad;
      }
      BackwardArgs args{*this, n.inputs, n.value, n.grad, in_grads};
      n.backward(args);
    }
    if (n.store != nullptr) n.store->entry(n.param_index).grad.add_(n.grad);
    if (!n.keep_grad) n.grad = Tensor();
  }
}

}  // namespace attukan
