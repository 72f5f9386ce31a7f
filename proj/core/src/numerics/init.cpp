#include "attukan/numerics/init.hpp"

#include <random>

namespace attukan {

std::uint64_t stable_hash(std::string_view s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor uniform_init(Shape shape, double bound, std::uint64_t seed, std::string_view name) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(stable_hash(name, 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL)));
  for (auto& v : t.data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<float>((2.0 * u - 1.0) * bound);
  }
  return t;
}

}  // namespace attukan
