#include "attukan/numerics/param_store.hpp"

#include <stdexcept>

namespace attukan {

ParamEntry& ParamStore::insert(ParamEntry entry) {
  if (index_.contains(entry.name))
    throw std::invalid_argument("duplicate parameter name: " + entry.name);
  index_.emplace(entry.name, entries_.size());
  entries_.push_back(std::move(entry));
  return entries_.back();
}

ParamEntry& ParamStore::add(std::string name, Tensor value) {
  ParamEntry e;
  e.name = std::move(name);
  e.grad = Tensor::zeros_like(value);
  e.m = Tensor::zeros_like(value);
  e.v = Tensor::zeros_like(value);
  e.value = std::move(value);
  return insert(std::move(e));
}

ParamEntry& ParamStore::add_buffer(std::string name, Tensor value) {
  ParamEntry e;
  e.name = std::move(name);
  e.value = std::move(value);
  e.trainable = false;
  return insert(std::move(e));
}

bool ParamStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

ParamEntry& ParamStore::entry(std::string_view name) { return entries_[index_of(name)]; }
const ParamEntry& ParamStore::entry(std::string_view name) const {
  return entries_[index_of(name)];
}

void ParamStore::zero_grad() {
  for (auto& e : entries_)
    if (e.trainable) e.grad.fill(0.0);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

}  // namespace attukan
