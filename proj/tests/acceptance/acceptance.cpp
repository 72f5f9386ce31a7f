// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any selected criterion fails.
//
//   attukan_acceptance [N ...] [--report FILE]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "attukan/app/ablation.hpp"
#include "attukan/app/gradcheck_suite.hpp"
#include "attukan/app/train.hpp"
#include "attukan/attention/attention_gate.hpp"
#include "attukan/data/image_io.hpp"
#include "attukan/kan/spline.hpp"
#include "attukan/losses/losses.hpp"
#include "attukan/metrics/metrics.hpp"
#include "attukan/network/checkpoint.hpp"
#include "oracles.hpp"

using namespace attukan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
  json data = json::object();
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("attukan_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Finite-difference agreement for every primitive, layer, block, loss and
// the assembled network.
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const app::GradSuiteResult r = app::run_gradcheck_suite();
  const double secs = seconds_since(t0);
  const std::set<std::string> required{"conv2d",       "max_pool2x2",         "bilinear_upsample2x",
                                       "batch_norm",   "layer_norm",          "kan_layer",
                                       "tokenized_kan_block", "attention_gate", "bce",
                                       "dice",         "jaccard",             "lpcl_label_masked",
                                       "attukan_network"};
  std::set<std::string> present;
  double worst = 0.0;
  for (const auto& row : r.rows) {
    present.insert(row.name);
    worst = std::max(worst, row.report.max_rel_error);
  }
  std::string missing;
  for (const auto& n : required)
    if (!present.count(n)) missing += " " + n;
  Outcome o;
  o.passed = r.passed && missing.empty() && secs < 120.0;
  o.detail = std::to_string(r.rows.size()) + " cases, max rel err " + fmt("%.2e", worst) + ", " +
             fmt("%.1f", secs) + " s";
  if (!r.passed) {
    o.detail += ", failed:";
    for (const auto& f : r.failures()) o.detail += " " + f;
  }
  if (!missing.empty()) o.detail += ", missing:" + missing;
  o.data = r.to_json();
  o.data["seconds"] = secs;
  return o;
}

// 2. Partition of unity and agreement with a direct Cox-de Boor recursion.
Outcome spline_correctness() {
  const kan::SplineSpec spec;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(spec.grid_min, spec.grid_max);
  double unity = 0.0, basis = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double x = u(rng);
    const auto b = kan::bspline_basis(x, spec);
    const auto want = oracle::cox_de_boor(x, spec.grid_min, spec.grid_max, spec.grid_count, spec.order);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      s += b[i];
      basis = std::max(basis, std::abs(b[i] - want[i]));
    }
    unity = std::max(unity, std::abs(s - 1.0));
  }
  Outcome o;
  o.passed = unity <= 1e-9 && basis <= 1e-12;
  o.detail = "max |sum - 1| " + fmt("%.1e", unity) + ", max |B - oracle| " + fmt("%.1e", basis);
  return o;
}

// 3. HD95 and C/A/L/F against all-pairs and set-algebra oracles.
Outcome metric_oracles() {
  std::mt19937_64 rng(3);
  int pairs = 0, set_mismatch = 0;
  double hd_err = 0.0;
  while (pairs < 200) {
    const std::size_t h = 2 + rng() % 15, w = 2 + rng() % 15;
    const double p = 0.1 + 0.05 * static_cast<double>(rng() % 8);
    const metrics::Mask a = oracle::random_mask(h, w, p, rng), b = oracle::random_mask(h, w, p, rng);
    if (a.empty() || b.empty()) continue;
    ++pairs;
    hd_err = std::max(hd_err, std::abs(metrics::hd95(a, b) - oracle::hd95(a, b)));
    const metrics::CalMetrics got = metrics::cal_metrics(a, b);
    const oracle::Cal want = oracle::cal(a, b, metrics::skeletonize(a), metrics::skeletonize(b));
    if (got.c != want.c || got.a != want.a || got.l != want.l || got.f != want.f) ++set_mismatch;
  }
  Outcome o;
  o.passed = hd_err <= 1e-9 && set_mismatch == 0;
  o.detail = std::to_string(pairs) + " pairs, max HD95 err " + fmt("%.1e", hd_err) + ", C/A/L/F mismatches " +
             std::to_string(set_mismatch);
  return o;
}

// 4. IoU = F1 / (2 - F1), and F1 82.50 maps to IoU 70.24 within rounding.
Outcome iou_consistency() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const metrics::ConfusionCounts c{rng() % 100000 + 1, rng() % 100000, rng() % 100000, rng() % 100000};
    const metrics::BasicMetrics m = metrics::basic_metrics(c);
    worst = std::max(worst, std::abs(m.miou - m.f1 / (2.0 - m.f1)));
  }
  // F1 = 66 / 80 = 0.8250 exactly.
  const metrics::BasicMetrics t = metrics::basic_metrics({33, 7, 1000, 7});
  const double iou = 100.0 * t.miou;
  Outcome o;
  o.passed = worst <= 1e-12 && std::abs(t.f1 - 0.825) < 1e-12 && std::abs(iou - 70.21) < 0.005 &&
             std::abs(iou - 70.24) <= 0.05;
  o.detail = "identity err " + fmt("%.1e", worst) + ", F1 82.50 -> IoU " + fmt("%.4f", iou) + " (reference 70.24)";
  return o;
}

// 5. Gate coefficients stay in (0,1), equal 1/2 with psi = 0, and rise with b_psi.
Outcome attention_behaviour() {
  auto rand = [](Shape s, std::mt19937_64& rng, double r) {
    std::uniform_real_distribution<double> u(-r, r);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = u(rng);
    return t;
  };
  std::mt19937_64 rng(5);
  std::size_t outside = 0, half_miss = 0, non_monotone = 0, probes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ParamStore store;
    attention::register_attention_gate(store, "ag", {4, 8, 0}, static_cast<std::uint64_t>(trial));
    store.value("ag.bg") = rand({2}, rng, 2.0);
    const Tensor x = rand({2, 4, 8, 8}, rng, 3.0), g = rand({2, 8, 4, 4}, rng, 3.0);
    auto alpha = [&] {
      GradTape t(false);
      return t.value(attention::attention_gate(t, store, "ag", t.constant(x), t.constant(g)).alpha);
    };
    Tensor prev;
    for (double b = -6.0; b <= 6.0; b += 0.75) {
      store.value("ag.bpsi").fill(b);
      const Tensor a = alpha();
      for (std::size_t i = 0; i < a.size(); ++i) {
        ++probes;
        outside += !(a[i] > 0.0 && a[i] < 1.0);
        if (!prev.empty()) non_monotone += !(a[i] > prev[i]);
      }
      prev = a;
    }
    store.value("ag.psi").fill(0.0);
    store.value("ag.bpsi").fill(0.0);
    const Tensor half = alpha();
    for (double a : half.data()) half_miss += a != 0.5;
  }
  Outcome o;
  o.passed = outside == 0 && half_miss == 0 && non_monotone == 0;
  o.detail = std::to_string(probes) + " probes: outside (0,1) " + std::to_string(outside) + ", psi=0 not 0.5 " +
             std::to_string(half_miss) + ", non-monotone " + std::to_string(non_monotone);
  return o;
}

// 6. Class-aligned features give a lower contrastive loss than the same
// features with class assignments shuffled.
Outcome lpcl_ordering() {
  std::mt19937_64 rng(6);
  int wins = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t V = 2 * (2 + trial % 3), S = 2 + trial % 4, L = S * S, D = 2;
    Tensor labels({V, S, S});
    for (std::size_t v = 0; v < V; v += 2)
      for (std::size_t s = 0; s < L; ++s) labels[v * L + s] = labels[(v + 1) * L + s] = static_cast<double>(rng() % 2);
    for (std::size_t v = 0; v < V; ++v) labels[v * L] = v < 2 ? 0.0 : 1.0;  // both classes at location 0
    auto features = [&](const Tensor& cls) {
      Tensor f({V, D, S, S}, 0.0);
      for (std::size_t v = 0; v < V; ++v)
        for (std::size_t s = 0; s < L; ++s) f[(v * D + static_cast<std::size_t>(cls[v * L + s])) * L + s] = 1.0;
      return f;
    };
    Tensor shuffled = labels;
    bool broken = false;
    while (!broken) {
      for (std::size_t s = 0; s < L; ++s) {
        std::vector<double> col(V);
        for (std::size_t v = 0; v < V; ++v) col[v] = labels[v * L + s];
        std::shuffle(col.begin(), col.end(), rng);
        for (std::size_t v = 0; v < V; ++v) shuffled[v * L + s] = col[v];
      }
      for (std::size_t v = 0; v < V; v += 2)
        for (std::size_t s = 0; s < L; ++s) broken |= shuffled[v * L + s] != shuffled[(v + 1) * L + s];
    }
    auto loss = [&](const Tensor& f) {
      GradTape t(false);
      losses::ContrastiveBatch b{t.constant(f), labels, losses::adjacent_pairing(V), 0.5};
      return t.value(losses::lpcl(t, b)).item();
    };
    wins += loss(features(labels)) < loss(features(shuffled));
  }
  Outcome o;
  o.passed = wins == trials;
  o.detail = std::to_string(wins) + "/" + std::to_string(trials) + " trials strictly lower";
  return o;
}

app::RunConfig smoke_config() {
  app::RunConfig c;
  c.dataset.count = 20;
  c.dataset.synth.size = 128;
  c.model.channels = {8, 16, 32, 64, 128};
  c.patch_size = 64;
  c.epochs = 30;
  c.batch_size = 4;
  c.seed = 0;
  c.model.seed = 0;
  c.validate();
  return c;
}

// 7. Thirty epochs on twenty synthetic images.
Outcome training_smoke() {
  const app::RunConfig cfg = smoke_config();
  const auto t0 = Clock::now();
  const app::DatasetSplit split = app::split_samples(app::load_samples(cfg), cfg);
  app::TrainOptions opts;
  opts.on_epoch = [&](const app::EpochLog& e) {
    std::cerr << "  [7] epoch " << e.epoch << " loss " << fmt("%.4f", e.loss) << " val_f1 " << fmt("%.4f", e.val_f1)
              << " (" << fmt("%.0f", seconds_since(t0)) << " s)\n";
  };
  app::TrainResult r = app::train(cfg, split, opts);
  const app::EvalSummary eval = app::evaluate(r.model, split.val, cfg.patch_size, cfg.threshold);
  const double secs = seconds_since(t0);
  const double f1 = eval.mean_f1();
  const double ratio = r.history.back().loss / r.history.front().loss;
  Outcome o;
  o.passed = r.history.size() == 30 && f1 >= 0.75 && ratio < 0.5 && secs < 1800.0;
  o.detail = "held-out F1 " + fmt("%.4f", f1) + ", loss " + fmt("%.4f", r.history.front().loss) + " -> " +
             fmt("%.4f", r.history.back().loss) + " (ratio " + fmt("%.3f", ratio) + "), " + fmt("%.0f", secs) +
             " s";
  o.data["eval"] = eval.to_json();
  json hist = json::array();
  for (const auto& e : r.history) hist.push_back(e.to_json());
  o.data["history"] = hist;
  o.data["seconds"] = secs;
  return o;
}

app::RunConfig ablation_config() {
  app::RunConfig c;
  c.dataset.count = 16;
  c.dataset.synth.size = 64;
  c.patch_size = 32;
  c.patches_per_image = 6;
  c.batch_size = 4;
  c.epochs = 30;
  c.val_fraction = 0.2;
  c.validate();
  return c;
}

// 8. Over five seeds, neither attention gates nor the contrastive term
// lowers mean F1 by more than 0.005 relative to plain UKAN.
Outcome ablation_direction() {
  const app::RunConfig base = ablation_config();
  const auto t0 = Clock::now();
  app::AblationOptions opts;
  opts.seeds = 5;
  opts.on_run = [&](const std::string& arm, std::uint64_t seed, double f1) {
    std::cerr << "  [8] " << arm << " seed " << seed << " F1 " << fmt("%.4f", f1) << " ("
              << fmt("%.0f", seconds_since(t0)) << " s)\n";
  };
  const json r = app::run_ablation(base, app::AblationAxis::attention, opts);
  const double plain = r["arms"][0]["f1"].get<double>();
  bool ok = r["shared_data_stream"].get<bool>();
  std::string detail = "UKAN " + fmt("%.4f", plain);
  for (std::size_t a = 1; a < r["arms"].size(); ++a) {
    const double f1 = r["arms"][a]["f1"].get<double>();
    ok = ok && f1 >= plain - 0.005;
    detail += ", " + r["arms"][a]["name"].get<std::string>() + " " + fmt("%+.4f", f1 - plain);
  }
  Outcome o;
  o.passed = ok;
  o.detail = detail + " (" + fmt("%.0f", seconds_since(t0)) + " s)";
  o.data = r;
  return o;
}

// 9. Two identical seeded runs write identical bytes.
Outcome determinism() {
  app::RunConfig c;
  c.dataset.count = 6;
  c.dataset.synth.size = 32;
  c.dataset.synth.n_trees = 2;
  c.dataset.synth.branch_depth = 2;
  c.dataset.synth.w_max = 2.5;
  c.dataset.prep.tiles = 4;
  c.model.channels = {4, 8, 16, 32, 64};
  c.model.kan_layers = 2;
  c.patch_size = 16;
  c.patches_per_image = 4;
  c.batch_size = 4;
  c.epochs = 3;
  c.seed = 9;
  c.model.seed = 9;
  c.validate();
  std::vector<fs::path> dirs{scratch("det_a"), scratch("det_b")};
  for (const auto& d : dirs) {
    app::TrainOptions o;
    o.out_dir = d;
    app::train(c, o);
  }
  std::size_t compared = 0, differ = 0;
  for (const char* f : {"train_log.jsonl", "final.json", "final.bin", "best.json", "best.bin"}) {
    ++compared;
    const std::string a = slurp(dirs[0] / f), b = slurp(dirs[1] / f);
    differ += a.empty() || a != b;
  }
  Outcome o;
  o.passed = differ == 0;
  o.detail = std::to_string(compared - differ) + "/" + std::to_string(compared) + " artefacts byte-identical";
  return o;
}

// 10. Image and checkpoint round trips; truncation is always a structured error.
Outcome io_round_trips() {
  std::mt19937_64 rng(10);
  std::size_t failures = 0, truncations = 0;
  std::string notes;
  for (Shape s : {Shape{9, 7}, Shape{3, 5, 6}}) {
    Tensor t(s);
    for (auto& v : t.data()) v = static_cast<double>(rng() % 256) / 255.0;
    const auto bytes = data::encode_pnm(t);
    if (!(data::decode_pnm(bytes) == t) || data::encode_pnm(data::decode_pnm(bytes)) != bytes) {
      ++failures;
      notes += " pnm-roundtrip";
    }
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      ++truncations;
      try {
        data::decode_pnm(std::span(bytes.data(), n));
        ++failures;
        notes += " pnm-prefix-accepted";
      } catch (const data::ParseError& e) {
        if (e.offset() > n) ++failures;
      }
    }
  }

  network::ModelConfig mc;
  mc.channels = {2, 4, 8, 16, 32};
  mc.seed = 1;
  network::Model m = network::build(mc);
  for (auto& e : m.params().entries()) {
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) e.grad[i] = std::sin(static_cast<double>(i) + 1.0);
  }
  adam_step(m.params());
  const fs::path dir = scratch("io");
  network::CheckpointMeta meta;
  meta.training = {{"epoch", 1}};
  network::save_checkpoint(dir / "a.json", m.params(), meta);
  network::Model back = network::build(mc);
  network::load_checkpoint(dir / "a.json", back.params());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto &x = m.params().entry(i), &y = back.params().entry(i);
    if (!(x.value == y.value) || x.step != y.step || (x.trainable && (!(x.m == y.m) || !(x.v == y.v)))) {
      ++failures;
      notes += " ckpt-" + x.name;
    }
  }
  network::save_checkpoint(dir / "b.json", back.params(), meta);
  if (slurp(dir / "a.bin") != slurp(dir / "b.bin")) {
    ++failures;
    notes += " ckpt-resave";
  }

  const std::string blob = slurp(dir / "a.bin");
  const json manifest = network::read_manifest(dir / "a.json");
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, blob.size() / 2, blob.size() - 1}) {
    ++truncations;
    network::Model target = network::build(mc);
    const ParamStore before = target.params();
    try {
      network::decode_checkpoint(manifest, std::vector<std::uint8_t>(blob.begin(), blob.begin() + cut),
                                 target.params());
      ++failures;
      notes += " blob-prefix-accepted";
    } catch (const network::CheckpointError& e) {
      if (e.kind() != network::CheckpointError::Kind::length) ++failures;
    }
    for (std::size_t i = 0; i < before.size(); ++i)
      if (!(before.entry(i).value == target.params().entry(i).value)) {
        ++failures;
        notes += " partial-load";
        break;
      }
  }
  const std::string text = slurp(dir / "a.json");
  std::ofstream(dir / "cut.json", std::ios::binary) << text.substr(0, text.size() / 2);
  ++truncations;
  try {
    network::read_manifest(dir / "cut.json");
    ++failures;
  } catch (const network::CheckpointError& e) {
    if (e.kind() != network::CheckpointError::Kind::manifest) ++failures;
  }

  Outcome o;
  o.passed = failures == 0;
  o.detail = "PGM/PPM and checkpoint round trips, " + std::to_string(truncations) + " truncations, " +
             std::to_string(failures) + " failures" + notes;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient suite", gradient_suite}},
      {2, {"spline correctness", spline_correctness}},
      {3, {"metric oracles", metric_oracles}},
      {4, {"IoU consistency", iou_consistency}},
      {5, {"attention behaviour", attention_behaviour}},
      {6, {"contrastive ordering", lpcl_ordering}},
      {7, {"training smoke test", training_smoke}},
      {8, {"ablation direction", ablation_direction}},
      {9, {"determinism", determinism}},
      {10, {"I/O round trips", io_round_trips}},
  };
  std::vector<int> selected;
  fs::path report = "acceptance_report.json";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report" && i + 1 < argc) {
      report = argv[++i];
    } else if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit) && criteria.count(std::stoi(a))) {
      selected.push_back(std::stoi(a));
    } else {
      std::cerr << "usage: " << argv[0] << " [1-10 ...] [--report FILE]\n";
      return 2;
    }
  }
  if (selected.empty())
    for (const auto& [n, c] : criteria) selected.push_back(n);

  json out = json::object();
  int failed = 0;
  for (int n : selected) {
    const auto& [name, run] = criteria.at(n);
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.passed;
    std::cout << "criterion " << n << " (" << name << "): " << (o.passed ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
    out[std::to_string(n)] = {{"name", name}, {"passed", o.passed}, {"detail", o.detail}, {"data", o.data}};
  }
  std::ofstream(report) << out.dump(2) << "\n";
  return failed ? 1 : 0;
}
