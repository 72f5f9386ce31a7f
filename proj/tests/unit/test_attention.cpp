#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "attukan/attention/attention_gate.hpp"

using namespace attukan;
using namespace attukan::attention;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

struct GateRun {
  Tensor gated, alpha;
};

GateRun run_gate(ParamStore& store, const Tensor& x, const Tensor& g) {
  GradTape t(false);
  GateOutput o = attention_gate(t, store, "ag", t.constant(x), t.constant(g));
  return {t.value(o.gated), t.value(o.alpha)};
}

ParamStore make_gate(std::size_t skip, std::size_t gate, std::size_t inter, std::uint64_t seed) {
  ParamStore store;
  register_attention_gate(store, "ag", {skip, gate, inter}, seed);
  return store;
}

}  // namespace

TEST(AttentionGate, ZeroPsiGivesHalf) {
  ParamStore store = make_gate(3, 4, 2, 1);
  store.value("ag.psi").fill(0.0);
  store.value("ag.bpsi").fill(0.0);
  const Tensor x = random_tensor({2, 3, 4, 4}, 2);
  const GateRun r = run_gate(store, x, random_tensor({2, 4, 2, 2}, 3));
  for (double a : r.alpha.data()) EXPECT_EQ(a, 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(r.gated[i], x[i] / 2);
}

TEST(AttentionGate, NegativeBiasSaturates) {
  ParamStore store = make_gate(2, 2, 2, 1);
  store.value("ag.psi").fill(0.0);
  store.value("ag.bpsi").fill(-20.0);
  const GateRun r = run_gate(store, random_tensor({1, 2, 2, 2}, 4), random_tensor({1, 2, 2, 2}, 5));
  for (double a : r.alpha.data()) {
    EXPECT_GT(a, 0.0);
    EXPECT_NEAR(a, 2.0611536e-9, 1e-15);
  }
  for (double v : r.gated.data()) EXPECT_LT(std::abs(v), 1e-8);
}

TEST(AttentionGate, MatchesPerPixelLoop) {
  ParamStore store = make_gate(2, 3, 2, 9);
  store.value("ag.bg") = random_tensor({2}, 6);
  store.value("ag.bpsi") = random_tensor({1}, 7);
  const Tensor x = random_tensor({1, 2, 2, 2}, 8), g = random_tensor({1, 3, 2, 2}, 9);
  const GateRun r = run_gate(store, x, g);
  const Tensor &wx = store.value("ag.wx"), &wg = store.value("ag.wg"), &bg = store.value("ag.bg"),
               &psi = store.value("ag.psi");
  const double bpsi = store.value("ag.bpsi")[0];
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double q = bpsi;
      for (std::size_t k = 0; k < 2; ++k) {
        double s = bg[k];
        for (std::size_t c = 0; c < 2; ++c) s += wx.at({k, c, 0, 0}) * x.at({0, c, i, j});
        for (std::size_t c = 0; c < 3; ++c) s += wg.at({k, c, 0, 0}) * g.at({0, c, i, j});
        q += psi.at({0, k, 0, 0}) * std::max(0.0, s);
      }
      const double a = 1.0 / (1.0 + std::exp(-q));
      EXPECT_NEAR(r.alpha.at({0, 0, i, j}), a, 1e-14);
      for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(r.gated.at({0, c, i, j}), x.at({0, c, i, j}) * a, 1e-14);
    }
}

TEST(AttentionGate, AlphaInOpenUnitIntervalOnRandomProbes) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ParamStore store = make_gate(4, 8, 0, seed);
    store.value("ag.bg") = random_tensor({2}, seed + 100, -2.0, 2.0);
    store.value("ag.bpsi") = random_tensor({1}, seed + 200, -3.0, 3.0);
    const GateRun r = run_gate(store, random_tensor({2, 4, 8, 8}, seed + 300, -3.0, 3.0),
                               random_tensor({2, 8, 4, 4}, seed + 400, -3.0, 3.0));
    ASSERT_EQ(r.alpha.shape(), (Shape{2, 1, 8, 8}));
    for (double a : r.alpha.data()) {
      ASSERT_GT(a, 0.0);
      ASSERT_LT(a, 1.0);
    }
  }
}

TEST(AttentionGate, MonotoneInPsiBias) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    ParamStore store = make_gate(3, 5, 2, seed);
    const Tensor x = random_tensor({1, 3, 4, 4}, seed + 1), g = random_tensor({1, 5, 2, 2}, seed + 2);
    Tensor prev;
    for (double b = -4.0; b <= 4.0; b += 0.5) {
      store.value("ag.bpsi").fill(b);
      const Tensor a = run_gate(store, x, g).alpha;
      if (!prev.empty())
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_GT(a[i], prev[i]);
      prev = a;
    }
  }
}

TEST(AttentionGate, CoarseGateIsUpsampled) {
  ParamStore store = make_gate(2, 4, 0, 3);
  const GateRun r = run_gate(store, random_tensor({1, 2, 8, 8}, 10), random_tensor({1, 4, 2, 2}, 11));
  EXPECT_EQ(r.gated.shape(), (Shape{1, 2, 8, 8}));
  EXPECT_EQ(r.alpha.shape(), (Shape{1, 1, 8, 8}));
}

TEST(AttentionGate, ChannelMismatchThrows) {
  ParamStore store = make_gate(2, 4, 0, 3);
  EXPECT_THROW(run_gate(store, Tensor({1, 3, 4, 4}), Tensor({1, 4, 2, 2})), DimensionError);
  EXPECT_THROW(run_gate(store, Tensor({1, 2, 4, 4}), Tensor({1, 5, 2, 2})), DimensionError);
}

TEST(FuseSkip, ConcatenatesChannels) {
  GradTape t(false);
  const Tensor a = random_tensor({1, 1, 2, 2}, 12), b = random_tensor({1, 1, 2, 2}, 13);
  const Tensor y = t.value(fuse_skip(t, t.constant(a), t.constant(b)));
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y[i], a[i]);
    EXPECT_EQ(y[4 + i], b[i]);
  }
  EXPECT_THROW(fuse_skip(t, t.constant(a), t.constant(Tensor({1, 1, 4, 4}))), DimensionError);
}
