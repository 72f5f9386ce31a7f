#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attukan/numerics/tensor.hpp"

namespace attukan {

/// One named tensor slot. Trainable entries carry a gradient accumulator and
/// Adam moments of the same shape; buffers (batch-norm running statistics)
/// only carry a value.
struct ParamEntry {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  std::int64_t step = 0;
  bool trainable = true;
};

/// Named learnable parameters in registration order.
class ParamStore {
 public:
  ParamEntry& add(std::string name, Tensor value);
  ParamEntry& add_buffer(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  ParamEntry& entry(std::string_view name);
  const ParamEntry& entry(std::string_view name) const;
  ParamEntry& entry(std::size_t index) { return entries_.at(index); }
  const ParamEntry& entry(std::size_t index) const { return entries_.at(index); }

  Tensor& value(std::string_view name) { return entry(name).value; }
  const Tensor& value(std::string_view name) const { return entry(name).value; }
  const Tensor& grad(std::string_view name) const { return entry(name).grad; }

  std::vector<ParamEntry>& entries() noexcept { return entries_; }
  const std::vector<ParamEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void zero_grad();
  /// Sum of element counts over trainable entries.
  std::size_t parameter_count() const;

 private:
  ParamEntry& insert(ParamEntry entry);

  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace attukan
