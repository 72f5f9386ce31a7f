#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "attukan/losses/losses.hpp"
#include "attukan/numerics/adam.hpp"
#include "attukan/numerics/gradcheck.hpp"
#include "attukan/numerics/init.hpp"
#include "attukan/numerics/ops.hpp"

using namespace attukan;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Direct cross-correlation, independent of the library's im2col path.
Tensor naive_conv(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double s = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v) {
                const long y = static_cast<long>(i * stride + u) - pad;
                const long xx = static_cast<long>(j * stride + v) - pad;
                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                s += x.at({b, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)}) * k.at({o, c, u, v});
              }
          out.at({b, o, i, j}) = s;
        }
  return out;
}

Tensor conv_value(const Tensor& x, const Tensor& k, int stride, int pad) {
  GradTape t(false);
  return t.value(ops::conv2d(t, t.constant(x), t.constant(k), Var{}, stride, pad));
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at({1, 2}), 6.0);
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.at({2, 0}), 5.0);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Conv2d, IdentityKernel) {
  Tensor x = random_tensor({1, 1, 5, 5}, 1);
  Tensor k({1, 1, 3, 3}, 0.0);
  k.at({0, 0, 1, 1}) = 1.0;
  EXPECT_EQ(conv_value(x, k, 1, 1), x);
}

TEST(Conv2d, AllOnesGivesFour) {
  Tensor y = conv_value(Tensor({1, 1, 2, 2}, 1.0), Tensor({1, 1, 2, 2}, 1.0), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(Conv2d, StridedShape) {
  Tensor y = conv_value(Tensor({1, 1, 4, 4}, 1.0), Tensor({1, 1, 3, 3}, 1.0), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  EXPECT_THROW(conv_value(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), 1, 1), DimensionError);
}

TEST(Conv2d, MatchesNaiveLoop) {
  for (int stride : {1, 2})
    for (int pad : {0, 1, 2}) {
      Tensor x = random_tensor({2, 3, 7, 6}, 10 + stride * 3 + pad);
      Tensor k = random_tensor({4, 3, 3, 3}, 20 + pad);
      Tensor b = random_tensor({4}, 30);
      GradTape t(false);
      Tensor got = t.value(ops::conv2d(t, t.constant(x), t.constant(k), t.constant(b), stride, pad));
      Tensor want = naive_conv(x, k, &b, stride, pad);
      ASSERT_EQ(got.shape(), want.shape());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(DepthwiseConv, IdentityAndBorderCounts) {
  Tensor x = random_tensor({1, 2, 4, 5}, 3);
  Tensor centre({2, 1, 3, 3}, 0.0);
  centre.at({0, 0, 1, 1}) = centre.at({1, 0, 1, 1}) = 1.0;
  GradTape t(false);
  EXPECT_EQ(t.value(ops::depthwise_conv3x3(t, t.constant(x), t.constant(centre), t.constant(Tensor({2})))), x);

  const double c = 0.5;
  Tensor y = t.value(ops::depthwise_conv3x3(t, t.constant(Tensor({1, 1, 4, 4}, c)),
                                            t.constant(Tensor({1, 1, 3, 3}, 1.0)), t.constant(Tensor({1}))));
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1, 1}), 9 * c);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0, 1}), 6 * c);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0, 0}), 4 * c);
}

TEST(MaxPool, Basics) {
  GradTape t(false);
  Tensor c = t.value(ops::max_pool2x2(t, t.constant(Tensor({1, 2, 4, 6}, 0.7))));
  EXPECT_EQ(c, Tensor({1, 2, 2, 3}, 0.7));
  Tensor w = t.value(ops::max_pool2x2(t, t.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}))));
  EXPECT_EQ(w[0], 4.0);
  EXPECT_THROW(ops::max_pool2x2(t, t.constant(Tensor({1, 1, 3, 4}))), DimensionError);
}

TEST(Bilinear, Basics) {
  GradTape t(false);
  EXPECT_EQ(t.value(ops::bilinear_upsample2x(t, t.constant(Tensor({1, 1, 3, 2}, 0.3)))),
            Tensor({1, 1, 6, 4}, 0.3));
  EXPECT_EQ(t.value(ops::bilinear_upsample2x(t, t.constant(Tensor({1, 1, 1, 1}, 2.5)))),
            Tensor({1, 1, 2, 2}, 2.5));
  Tensor row = t.value(ops::bilinear_upsample2x(t, t.constant(Tensor({1, 1, 1, 2}, {0.0, 1.0}))));
  ASSERT_EQ(row.shape(), (Shape{1, 1, 2, 4}));
  const double want[4] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(row.at({0, 0, r, j}), want[j], 1e-15);
}

TEST(BatchNorm, TrainingNormalises) {
  GradTape t(false);
  Tensor x = random_tensor({3, 2, 4, 4}, 5, -3.0, 5.0);
  Tensor rm({2}, 0.0), rv({2}, 1.0);
  Tensor y = t.value(ops::batch_norm(t, t.constant(x), t.constant(Tensor({2}, 1.0)), t.constant(Tensor({2})),
                                     rm, rv, {}));
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    const double n = 3 * 16;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 16; ++i) {
        const double v = y[(b * 2 + c) * 16 + i];
        s += v;
        s2 += v * v;
      }
    EXPECT_NEAR(s / n, 0.0, 1e-5);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0, 1e-5);
  }
  EXPECT_NE(rm[0], 0.0);
  EXPECT_EQ(static_cast<double>(static_cast<float>(rm[0])), rm[0]);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  GradTape t(false);
  Tensor rm({2}), rv({2}, 1.0);
  Tensor y = t.value(ops::batch_norm(t, t.constant(random_tensor({2, 2, 3, 3}, 6)), t.constant(Tensor({2})),
                                     t.constant(Tensor({2}, {0.25, -1.5})), rm, rv, {}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 9; ++i) {
      EXPECT_EQ(y[(b * 2) * 9 + i], 0.25);
      EXPECT_EQ(y[(b * 2 + 1) * 9 + i], -1.5);
    }
}

TEST(BatchNorm, EvalIsAffine) {
  GradTape t(false);
  Tensor x = random_tensor({2, 1, 2, 2}, 7);
  Tensor rm({1}, 0.0), rv({1}, 1.0);
  ops::BatchNormOptions eval;
  eval.training = false;
  Tensor y = t.value(ops::batch_norm(t, t.constant(x), t.constant(Tensor({1}, 2.0)), t.constant(Tensor({1}, 0.5)),
                                     rm, rv, eval));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 2.0 * x[i] / std::sqrt(1.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_EQ(rm[0], 0.0);
  EXPECT_EQ(rv[0], 1.0);
}

TEST(LayerNorm, Examples) {
  GradTape t(false);
  Tensor ones = t.value(ops::layer_norm(t, t.constant(Tensor({1, 3}, 1.0)), t.constant(Tensor({3}, 1.0)),
                                        t.constant(Tensor({3}))));
  EXPECT_EQ(ones, Tensor({1, 3}, 0.0));
  Tensor pm = t.value(ops::layer_norm(t, t.constant(Tensor({1, 2}, {-1.0, 1.0})), t.constant(Tensor({2}, 1.0)),
                                      t.constant(Tensor({2}))));
  EXPECT_NEAR(pm[0], -1.0, 1e-4);
  EXPECT_NEAR(pm[1], 1.0, 1e-4);
  Tensor aff = t.value(ops::layer_norm(t, t.constant(Tensor({1, 2}, {-1.0, 1.0})), t.constant(Tensor({2}, 2.0)),
                                       t.constant(Tensor({2}, 1.0))));
  EXPECT_NEAR(aff[0], 2.0 * pm[0] + 1.0, 1e-12);
  EXPECT_NEAR(aff[1], 2.0 * pm[1] + 1.0, 1e-12);
}

TEST(Backward, LinearAndQuadratic) {
  GradTape t;
  Var th = t.variable(Tensor({2}, {1.0, 2.0}));
  t.backward(ops::sum(t, th));
  EXPECT_EQ(t.grad(th), Tensor({2}, 1.0));

  GradTape q;
  Var p = q.variable(Tensor({2}, {1.0, 2.0}));
  q.backward(ops::sum(q, ops::mul(q, p, p)));
  EXPECT_EQ(q.grad(p), Tensor({2}, {2.0, 4.0}));
}

TEST(Backward, NonScalarLossThrows) {
  GradTape t;
  Var th = t.variable(Tensor({2}, 1.0));
  EXPECT_THROW(t.backward(ops::relu(t, th)), DimensionError);
}

TEST(Backward, ParametersAccumulateIntoStore) {
  ParamStore store;
  store.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
  for (int rep = 0; rep < 2; ++rep) {
    GradTape t;
    Var w = t.parameter(store, "w");
    t.backward(ops::sum(t, ops::scale(t, w, 3.0)));
  }
  EXPECT_EQ(store.grad("w"), Tensor({3}, 6.0));
  store.zero_grad();
  EXPECT_EQ(store.grad("w"), Tensor({3}, 0.0));
}

TEST(GradCheck, LinearObjectiveIsExact) {
  ParamStore store;
  store.add("theta", random_tensor({6}, 8));
  const Tensor c = random_tensor({6}, 9);
  auto f = [&c](GradTape& t, ParamStore& s) { return ops::sum(t, ops::mul(t, t.parameter(s, "theta"), t.constant(c))); };
  GradCheckReport r = finite_diff_check(f, store);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, DiceOfTwoLayerNet) {
  ParamStore store;
  store.add("k1", uniform_init({3, 1, 3, 3}, 0.5, 1, "k1"));
  store.add("b1", uniform_init({3}, 0.1, 1, "b1"));
  store.add("k2", uniform_init({1, 3, 3, 3}, 0.5, 1, "k2"));
  store.add("b2", uniform_init({1}, 0.1, 1, "b2"));
  const Tensor x = random_tensor({1, 1, 8, 8}, 11, 0.0, 1.0);
  Tensor y({1, 1, 8, 8});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i % 3 == 0) ? 1.0 : 0.0;
  auto f = [&](GradTape& t, ParamStore& s) {
    Var h = ops::relu(t, ops::conv2d(t, t.constant(x), t.parameter(s, "k1"), t.parameter(s, "b1"), 1, 1));
    Var p = ops::sigmoid(t, ops::conv2d(t, h, t.parameter(s, "k2"), t.parameter(s, "b2"), 1, 1));
    return losses::dice_loss(t, p, y);
  };
  GradCheckReport r = finite_diff_check(f, store);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GradCheck, MaxPoolTieIsFlaggedNotFailed) {
  ParamStore store;
  store.add("x", Tensor({1, 1, 2, 2}, {0.5, 0.5, 0.1, 0.2}));
  auto f = [](GradTape& t, ParamStore& s) { return ops::sum(t, ops::max_pool2x2(t, t.parameter(s, "x"))); };
  GradCheckReport r = finite_diff_check(f, store);
  EXPECT_TRUE(r.passed);
  ASSERT_FALSE(r.kinks.empty());
  EXPECT_EQ(r.kinks.front(), "max_pool2x2");
  EXPECT_GT(r.params.at(0).nondifferentiable, 0u);
}

TEST(GradCheck, WrongBackwardFails) {
  ParamStore store;
  store.add("x", random_tensor({4}, 12));
  auto f = [](GradTape& t, ParamStore& s) {
    Var x = t.parameter(s, "x");
    Tensor sq = t.value(x);
    for (auto& v : sq.data()) v *= v;
    Var y = t.record(std::move(sq), {x},
                     [](const BackwardArgs& g) {
                       for (std::size_t i = 0; i < g.out_grad.size(); ++i)
                         (*g.in_grads[0])[i] += 3.0 * g.input(0)[i] * g.out_grad[i];
                     },
                     "bad_square");
    return ops::sum(t, y);
  };
  EXPECT_FALSE(finite_diff_check(f, store).passed);
}

TEST(GradCheck, NonFiniteObjectiveThrows) {
  ParamStore store;
  store.add("x", Tensor({1}, 1.0));
  auto f = [](GradTape& t, ParamStore& s) {
    return ops::scale(t, ops::sum(t, t.parameter(s, "x")), std::numeric_limits<double>::infinity());
  };
  EXPECT_THROW(finite_diff_check(f, store), std::domain_error);
}

TEST(Adam, RejectsNonPositiveLr) {
  ParamStore store;
  store.add("w", Tensor({1}));
  AdamOptions o;
  o.lr = 0.0;
  EXPECT_THROW(adam_step(store, o), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore store;
  store.add("w", Tensor({3}, {0.5, -0.25, 1.0}));
  const Tensor before = store.value("w");
  adam_step(store);
  EXPECT_EQ(store.value("w"), before);
}

TEST(Adam, FirstStepMovesByLr) {
  for (double g : {1e-3, 0.5, 40.0}) {
    ParamStore store;
    store.add("w", Tensor({2}, 1.0));
    store.entry("w").grad = Tensor({2}, {g, -g});
    adam_step(store);
    EXPECT_NEAR(store.value("w")[0], 1.0 - 0.003, 1e-6);
    EXPECT_NEAR(store.value("w")[1], 1.0 + 0.003, 1e-6);
  }
}

TEST(Adam, TwoStepsMatchHandSimulation) {
  const double g = 0.7, lr = 0.003, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ParamStore store;
  store.add("w", Tensor({1}, 0.25));
  double w = 0.25, m = 0.0, v = 0.0;
  for (int step = 1; step <= 2; ++step) {
    const double gs = step == 1 ? g : -g;
    store.entry("w").grad = Tensor({1}, gs);
    adam_step(store);
    m = b1 * m + (1 - b1) * gs;
    v = b2 * v + (1 - b2) * gs * gs;
    w -= lr * (m / (1 - std::pow(b1, step))) / (std::sqrt(v / (1 - std::pow(b2, step))) + eps);
    EXPECT_NEAR(store.value("w")[0], w, 1e-7);
  }
  // The second update opposes the first.
  EXPECT_LT(std::abs(store.value("w")[0] - 0.25), 0.003);
  EXPECT_EQ(store.entry("w").step, 2);
}

TEST(Init, DeterministicByNameAndFloatRepresentable) {
  Tensor a = uniform_init({4, 5}, 0.3, 42, "enc1.conv");
  Tensor b = uniform_init({4, 5}, 0.3, 42, "enc1.conv");
  Tensor c = uniform_init({4, 5}, 0.3, 42, "enc2.conv");
  Tensor d = uniform_init({4, 5}, 0.3, 43, "enc1.conv");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_NE(a, d);
  for (double v : a.data()) {
    EXPECT_LE(std::abs(v), 0.3);
    EXPECT_EQ(static_cast<double>(static_cast<float>(v)), v);
  }
}

TEST(ParamStore, CountsTrainableOnly) {
  ParamStore store;
  EXPECT_EQ(store.parameter_count(), 0u);
  store.add("w", Tensor({3, 4}));
  store.add_buffer("running_mean", Tensor({4}));
  EXPECT_EQ(store.parameter_count(), 12u);
}
