#pragma once

#include <cstdint>
#include <string_view>

#include "attukan/numerics/tensor.hpp"

namespace attukan {

/// FNV-1a, stable across platforms and runs.
std::uint64_t stable_hash(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finaliser of (a, b); derives independent seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Uniform values in [-bound, bound] drawn from a generator seeded by
/// (seed, name). Identically named tensors in two models built with the same
/// seed get identical values regardless of what else the models contain.
/// Values are float32-representable.
Tensor uniform_init(Shape shape, double bound, std::uint64_t seed, std::string_view name);

}  // namespace attukan
