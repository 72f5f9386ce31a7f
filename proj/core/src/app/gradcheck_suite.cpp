#include "attukan/app/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <memory>

#include "attukan/attention/attention_gate.hpp"
#include "attukan/kan/blocks.hpp"
#include "attukan/losses/losses.hpp"
#include "attukan/network/model.hpp"
#include "attukan/numerics/init.hpp"
#include "attukan/numerics/ops.hpp"

namespace attukan::app {

namespace {

constexpr std::uint64_t kSeed = 2024;

using Setup = std::function<void(ParamStore&)>;
using Body = std::function<Var(GradTape&, ParamStore&)>;

void input(ParamStore& s, const std::string& name, Shape shape, double bound = 1.0, double offset = 0.0) {
  Tensor t = uniform_init(std::move(shape), bound, kSeed, name);
  for (auto& v : t.data()) v += offset;
  s.add(name, std::move(t));
}

Tensor binary(Shape shape, const std::string& name) {
  Tensor t = uniform_init(std::move(shape), 1.0, kSeed, name);
  for (auto& v : t.data()) v = v > 0.0 ? 1.0 : 0.0;
  return t;
}

Var p(GradTape& t, ParamStore& s, const char* name) { return t.parameter(s, name); }

// Non-scalar outputs are reduced with fixed random weights so that every
// output element carries a distinct sensitivity.
ScalarObjective reduce(const std::string& name, Body body) {
  auto weights = std::make_shared<Tensor>();
  return [name, body, weights](GradTape& t, ParamStore& s) {
    Var out = body(t, s);
    const Tensor& v = t.value(out);
    if (v.size() == 1) return out;
    if (weights->shape() != v.shape()) *weights = uniform_init(v.shape(), 1.0, kSeed, name + ".weights");
    return ops::sum(t, ops::mul(t, out, t.constant(*weights)));
  };
}

GradCase make(std::string name, std::string kind, Setup setup, Body body, GradCheckOptions opts = {}) {
  auto run = [name, setup, body, opts] {
    ParamStore store;
    setup(store);
    return finite_diff_check(reduce(name, body), store, opts);
  };
  return {std::move(name), std::move(kind), std::move(run)};
}

// x^2 whose recorded backward uses 3x instead of 2x.
Var corrupted_square(GradTape& t, Var x) {
  Tensor out = t.value(x);
  for (auto& v : out.data()) v *= v;
  return t.record(std::move(out), {x}, [](const BackwardArgs& g) {
    const Tensor& xv = g.input(0);
    for (std::size_t i = 0; i < xv.size(); ++i) (*g.in_grads[0])[i] += 3.0 * xv[i] * g.out_grad[i];
  }, "corrupted_square");
}

network::ModelConfig tiny_model(bool attention) {
  network::ModelConfig cfg;
  cfg.channels = {2, 4, 8, 16, 32};
  cfg.kan_layers = 2;
  cfg.use_attention_gates = attention;
  cfg.seed = kSeed;
  return cfg;
}

GradCase network_case(std::string name, bool attention) {
  auto run = [name, attention] {
    network::Model model(tiny_model(attention));
    const Tensor images = uniform_init({4, 1, 16, 16}, 0.5, kSeed, name + ".images");
    const Tensor target = binary({4, 1, 16, 16}, name + ".target");
    ScalarObjective f = [&](GradTape& t, ParamStore&) {
      const auto fr = model.forward(t, images, true);
      losses::ContrastiveBatch cb;
      cb.features = fr.features[4];
      cb.labels_ds = losses::downsample_labels(target, 1);
      cb.view_pairing = losses::adjacent_pairing(4);
      return losses::hybrid_loss(t, fr.prob, target, &cb, {}).total;
    };
    GradCheckOptions opts;
    opts.max_elements_per_param = 16;
    return finite_diff_check(f, model.params(), opts);
  };
  return {std::move(name), "network", std::move(run)};
}

kan::TokenizedBlockConfig block_cfg(kan::Mixer mixer) {
  kan::TokenizedBlockConfig c;
  c.channels = 3;
  c.layers = 2;
  c.mixer = mixer;
  return c;
}

}  // namespace

std::vector<GradCase> gradcheck_cases(bool inject_fault) {
  std::vector<GradCase> cs;
  auto xy = [](Shape a, Shape b) {
    return [a, b](ParamStore& s) {
      input(s, "x", a);
      input(s, "y", b);
    };
  };
  auto x_only = [](Shape a, double bound = 1.0, double offset = 0.0) {
    return [a, bound, offset](ParamStore& s) { input(s, "x", a, bound, offset); };
  };

  cs.push_back(make("add", "op", xy({2, 3}, {2, 3}), [](GradTape& t, ParamStore& s) {
    return ops::add(t, p(t, s, "x"), p(t, s, "y"));
  }));
  cs.push_back(make("mul", "op", xy({2, 3}, {2, 3}), [](GradTape& t, ParamStore& s) {
    return ops::mul(t, p(t, s, "x"), p(t, s, "y"));
  }));
  cs.push_back(make("scale", "op", x_only({2, 3}), [](GradTape& t, ParamStore& s) {
    return ops::scale(t, p(t, s, "x"), -1.7);
  }));
  cs.push_back(make("relu", "op", x_only({3, 4}), [](GradTape& t, ParamStore& s) {
    return ops::relu(t, p(t, s, "x"));
  }));
  cs.push_back(make("sigmoid", "op", x_only({3, 4}, 3.0), [](GradTape& t, ParamStore& s) {
    return ops::sigmoid(t, p(t, s, "x"));
  }));
  cs.push_back(make("silu", "op", x_only({3, 4}, 3.0), [](GradTape& t, ParamStore& s) {
    return ops::silu(t, p(t, s, "x"));
  }));
  cs.push_back(make("sum", "op", x_only({2, 3}), [](GradTape& t, ParamStore& s) {
    Var x = p(t, s, "x");
    return ops::sum(t, ops::mul(t, x, x));
  }));
  cs.push_back(make("mean", "op", x_only({2, 3}), [](GradTape& t, ParamStore& s) {
    Var x = p(t, s, "x");
    return ops::mean(t, ops::mul(t, x, x));
  }));
  cs.push_back(make("weighted_sum", "op", xy({2, 2}, {3}), [](GradTape& t, ParamStore& s) {
    Var a = p(t, s, "x"), b = p(t, s, "y");
    const Var terms[] = {ops::sum(t, ops::mul(t, a, a)), ops::sum(t, ops::sigmoid(t, b))};
    const double w[] = {0.7, -1.3};
    return ops::weighted_sum(t, terms, w);
  }));
  cs.push_back(make("conv2d", "op",
                    [](ParamStore& s) {
                      input(s, "x", {2, 2, 4, 4});
                      input(s, "k", {3, 2, 3, 3}, 0.5);
                      input(s, "b", {3}, 0.5);
                    },
                    [](GradTape& t, ParamStore& s) {
                      return ops::conv2d(t, p(t, s, "x"), p(t, s, "k"), p(t, s, "b"), 1, 1);
                    }));
  cs.push_back(make("conv2d_strided", "op",
                    [](ParamStore& s) {
                      input(s, "x", {1, 2, 4, 4});
                      input(s, "k", {2, 2, 2, 2}, 0.5);
                    },
                    [](GradTape& t, ParamStore& s) {
                      return ops::conv2d(t, p(t, s, "x"), p(t, s, "k"), Var{}, 2, 0);
                    }));
  cs.push_back(make("depthwise_conv3x3", "op",
                    [](ParamStore& s) {
                      input(s, "x", {2, 3, 4, 4});
                      input(s, "k", {3, 1, 3, 3}, 0.5);
                      input(s, "b", {3}, 0.5);
                    },
                    [](GradTape& t, ParamStore& s) {
                      return ops::depthwise_conv3x3(t, p(t, s, "x"), p(t, s, "k"), p(t, s, "b"));
                    }));
  cs.push_back(make("max_pool2x2", "op", x_only({2, 2, 4, 4}), [](GradTape& t, ParamStore& s) {
    return ops::max_pool2x2(t, p(t, s, "x"));
  }));
  cs.push_back(make("bilinear_upsample2x", "op", x_only({2, 2, 2, 3}), [](GradTape& t, ParamStore& s) {
    return ops::bilinear_upsample2x(t, p(t, s, "x"));
  }));
  auto bn_setup = [](ParamStore& s) {
    input(s, "x", {3, 2, 4, 4});
    input(s, "gamma", {2}, 0.5, 1.0);
    input(s, "beta", {2}, 0.5);
    s.add_buffer("running_mean", uniform_init({2}, 0.2, kSeed, "running_mean"));
    Tensor rv = uniform_init({2}, 0.3, kSeed, "running_var");
    for (auto& v : rv.data()) v += 1.0;
    s.add_buffer("running_var", rv);
  };
  for (bool training : {true, false})
    cs.push_back(make(training ? "batch_norm" : "batch_norm_eval", "op", bn_setup,
                      [training](GradTape& t, ParamStore& s) {
                        ops::BatchNormOptions o;
                        o.training = training;
                        return ops::batch_norm(t, p(t, s, "x"), p(t, s, "gamma"), p(t, s, "beta"),
                                               s.value("running_mean"), s.value("running_var"), o);
                      }));
  cs.push_back(make("layer_norm", "op",
                    [](ParamStore& s) {
                      input(s, "x", {4, 5});
                      input(s, "gamma", {5}, 0.5, 1.0);
                      input(s, "beta", {5}, 0.5);
                    },
                    [](GradTape& t, ParamStore& s) {
                      return ops::layer_norm(t, p(t, s, "x"), p(t, s, "gamma"), p(t, s, "beta"));
                    }));
  cs.push_back(make("to_tokens", "op", x_only({2, 3, 2, 2}), [](GradTape& t, ParamStore& s) {
    Var tok = ops::to_tokens(t, p(t, s, "x"));
    return ops::from_tokens(t, ops::mul(t, tok, tok), 2, 2, 2);
  }));
  cs.push_back(make("matmul", "op", xy({3, 4}, {4, 2}), [](GradTape& t, ParamStore& s) {
    return ops::matmul(t, p(t, s, "x"), p(t, s, "y"));
  }));
  cs.push_back(make("linear", "op",
                    [](ParamStore& s) {
                      input(s, "x", {3, 4});
                      input(s, "w", {4, 2});
                      input(s, "b", {2});
                    },
                    [](GradTape& t, ParamStore& s) {
                      return ops::linear(t, p(t, s, "x"), p(t, s, "w"), p(t, s, "b"));
                    }));
  cs.push_back(make("concat_channels", "op", xy({2, 1, 2, 2}, {2, 3, 2, 2}), [](GradTape& t, ParamStore& s) {
    return ops::concat_channels(t, p(t, s, "x"), p(t, s, "y"));
  }));
  cs.push_back(make("mul_channel_broadcast", "op", xy({2, 3, 2, 2}, {2, 1, 2, 2}),
                    [](GradTape& t, ParamStore& s) {
                      return ops::mul_channel_broadcast(t, p(t, s, "x"), p(t, s, "y"));
                    }));

  const kan::SplineSpec spec;
  cs.push_back(make("kan_layer", "layer",
                    [spec](ParamStore& s) {
                      // Reaches past the grid so the clamped spline path is exercised too.
                      input(s, "x", {5, 3}, 2.6);
                      kan::register_kan_layer(s, "kan", 3, 4, spec, kSeed);
                    },
                    [spec](GradTape& t, ParamStore& s) {
                      return kan::kan_layer_forward(t, p(t, s, "x"), kan::bind_kan_layer(t, s, "kan"), spec);
                    }));
  cs.push_back(make("mlp_block", "layer",
                    [](ParamStore& s) {
                      input(s, "x", {4, 3});
                      const std::size_t widths[] = {3, 5, 2};
                      kan::register_mlp(s, "mlp", widths, kSeed);
                    },
                    [](GradTape& t, ParamStore& s) { return kan::mlp_block(t, s, "mlp", p(t, s, "x"), 2); }));
  cs.push_back(make("token_projection", "layer",
                    [](ParamStore& s) {
                      input(s, "x", {2, 3, 2, 2});
                      input(s, "proj", {3, 4});
                      input(s, "proj_out", {4, 3});
                    },
                    [](GradTape& t, ParamStore& s) {
                      const auto grid = kan::tokenize(t, p(t, s, "x"), p(t, s, "proj"));
                      return kan::detokenize(t, grid, p(t, s, "proj_out"));
                    }));

  for (auto mixer : {kan::Mixer::kan, kan::Mixer::mlp}) {
    const auto bc = block_cfg(mixer);
    cs.push_back(make(mixer == kan::Mixer::kan ? "tokenized_kan_block" : "tokenized_mlp_block", "block",
                      [bc](ParamStore& s) {
                        input(s, "x", {2, 3, 4, 4});
                        kan::register_tokenized_block(s, "block", bc, kSeed);
                      },
                      [bc](GradTape& t, ParamStore& s) {
                        return kan::tokenized_kan_block(t, s, "block", p(t, s, "x"), bc);
                      }));
  }
  cs.push_back(make("attention_gate", "block",
                    [](ParamStore& s) {
                      input(s, "x", {2, 3, 4, 4});
                      input(s, "g", {2, 4, 2, 2});
                      attention::register_attention_gate(s, "ag", {3, 4, 2}, kSeed);
                    },
                    [](GradTape& t, ParamStore& s) {
                      Var x = p(t, s, "x"), g = p(t, s, "g");
                      const auto out = attention::attention_gate(t, s, "ag", x, g);
                      return attention::fuse_skip(t, out.gated, ops::bilinear_upsample2x(t, g));
                    }));

  auto pred_setup = [](ParamStore& s) { input(s, "pred", {2, 1, 4, 4}, 0.45, 0.5); };
  const Tensor target = binary({2, 1, 4, 4}, "target");
  cs.push_back(make("bce", "loss", pred_setup, [target](GradTape& t, ParamStore& s) {
    return losses::bce(t, p(t, s, "pred"), target);
  }));
  cs.push_back(make("dice", "loss", pred_setup, [target](GradTape& t, ParamStore& s) {
    return losses::dice_loss(t, p(t, s, "pred"), target);
  }));
  cs.push_back(make("jaccard", "loss", pred_setup, [target](GradTape& t, ParamStore& s) {
    return losses::jaccard_loss(t, p(t, s, "pred"), target);
  }));
  const Tensor labels_ds = binary({4, 2, 2}, "labels_ds");
  auto contrastive = [labels_ds](Var f) {
    losses::ContrastiveBatch cb;
    cb.features = f;
    cb.labels_ds = labels_ds;
    cb.view_pairing = losses::adjacent_pairing(4);
    return cb;
  };
  for (auto mode : {losses::LpclMode::label_masked, losses::LpclMode::view_only})
    cs.push_back(make(std::string("lpcl_") + losses::to_string(mode), "loss",
                      [](ParamStore& s) { input(s, "features", {4, 3, 2, 2}); },
                      [contrastive, mode](GradTape& t, ParamStore& s) {
                        return losses::lpcl(t, contrastive(p(t, s, "features")), mode);
                      }));
  cs.push_back(make("hybrid_loss", "loss",
                    [](ParamStore& s) {
                      input(s, "logits", {4, 1, 4, 4}, 2.0);
                      input(s, "features", {4, 3, 2, 2});
                    },
                    [contrastive](GradTape& t, ParamStore& s) {
                      const Tensor tgt = binary({4, 1, 4, 4}, "hybrid.target");
                      const auto cb = contrastive(p(t, s, "features"));
                      return losses::hybrid_loss(t, ops::sigmoid(t, p(t, s, "logits")), tgt, &cb, {}).total;
                    }));

  cs.push_back(network_case("attukan_network", true));
  cs.push_back(network_case("ukan_network", false));

  if (inject_fault)
    cs.push_back(make("corrupted_square", "op", x_only({2, 3}), [](GradTape& t, ParamStore& s) {
      return corrupted_square(t, p(t, s, "x"));
    }));
  return cs;
}

std::vector<std::string> GradSuiteResult::failures() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (!r.report.passed) out.push_back(r.name);
  return out;
}

std::string GradSuiteResult::table() const {
  std::string s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %-8s %8s %12s %6s\n", "case", "kind", "checked", "max_rel_err", "result");
  s += buf;
  for (const auto& r : rows) {
    std::size_t checked = 0;
    for (const auto& pc : r.report.params) checked += pc.checked;
    std::snprintf(buf, sizeof buf, "%-24s %-8s %8zu %12.3e %6s\n", r.name.c_str(), r.kind.c_str(), checked,
                  r.report.max_rel_error, r.report.passed ? "ok" : "FAIL");
    s += buf;
  }
  return s;
}

nlohmann::json GradSuiteResult::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& pc : r.report.params)
      params.push_back({{"name", pc.name},
                        {"checked", pc.checked},
                        {"max_rel_error", pc.max_rel_error},
                        {"nondifferentiable", pc.nondifferentiable},
                        {"within_floor", pc.within_floor},
                        {"passed", pc.passed}});
    rs.push_back({{"name", r.name},
                  {"kind", r.kind},
                  {"max_rel_error", r.report.max_rel_error},
                  {"kinks", r.report.kinks},
                  {"params", params},
                  {"passed", r.report.passed}});
  }
  return {{"cases", rs}, {"passed", passed}, {"failures", failures()}};
}

GradSuiteResult run_gradcheck_suite(bool inject_fault, const std::function<void(const GradSuiteRow&)>& on_row) {
  GradSuiteResult res;
  for (const auto& c : gradcheck_cases(inject_fault)) {
    const auto t0 = std::chrono::steady_clock::now();
    GradSuiteRow row{c.name, c.kind, c.run(), 0.0};
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.passed = res.passed && row.report.passed;
    if (on_row) on_row(row);
    res.rows.push_back(std::move(row));
  }
  return res;
}

}  // namespace attukan::app
