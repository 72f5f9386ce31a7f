#include <random>

#include <benchmark/benchmark.h>

#include "attukan/kan/kan_layer.hpp"
#include "attukan/network/model.hpp"
#include "attukan/numerics/ops.hpp"

using namespace attukan;
using namespace attukan::ops;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({1, 16, n, n}, 1), k = random_tensor({16, 16, 3, 3}, 2), b({16}, 0.0);
  for (auto _ : state) {
    GradTape t(false);
    benchmark::DoNotOptimize(t.value(conv2d(t, t.constant(x), t.constant(k), t.constant(b), 1, 1)).data().data());
  }
}
BENCHMARK(BM_Conv2d)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_KanLayer(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const kan::SplineSpec spec;
  ParamStore store;
  kan::register_kan_layer(store, "kan", 64, 64, spec, 3);
  const Tensor x = random_tensor({rows, 64}, 4);
  for (auto _ : state) {
    GradTape t;
    const Var y = kan::kan_layer_forward(t, t.constant(x), kan::bind_kan_layer(t, store, "kan"), spec);
    t.backward(sum(t, y));
    store.zero_grad();
  }
}
BENCHMARK(BM_KanLayer)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ModelStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  network::Model m = network::build(network::ModelConfig{});
  const Tensor x = random_tensor({1, 1, n, n}, 5);
  for (auto _ : state) {
    GradTape t;
    t.backward(mean(t, m.forward(t, x, true).prob));
    m.params().zero_grad();
  }
}
BENCHMARK(BM_ModelStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
