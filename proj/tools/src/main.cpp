#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "attukan/app/ablation.hpp"
#include "attukan/app/config.hpp"
#include "attukan/app/gradcheck_suite.hpp"
#include "attukan/app/render.hpp"
#include "attukan/app/train.hpp"
#include "attukan/data/dataset.hpp"
#include "attukan/data/image_io.hpp"
#include "attukan/data/preprocess.hpp"
#include "attukan/data/synth.hpp"
#include "attukan/network/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace attukan;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kIoError = 2;

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw data::IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

int cmd_train(const std::string& config, const std::string& out, const std::string& resume) {
  const auto cfg = app::load_config(config);
  app::TrainOptions opts;
  opts.out_dir = fs::path(out);
  if (!resume.empty()) opts.resume = fs::path(resume);
  opts.on_epoch = [](const app::EpochLog& e) {
    std::printf("epoch %3zu  loss %.5f  bce %.4f  jaccard %.4f  dice %.4f  lpcl %.4f  val_f1 %.4f\n", e.epoch, e.loss,
                e.bce, e.jaccard, e.dice, e.lpcl, e.val_f1);
    std::fflush(stdout);
  };
  const auto r = app::train(cfg, opts);
  std::printf("best val_f1 %.4f at epoch %zu; checkpoints in %s\n", r.best_val_f1, r.best_epoch, out.c_str());
  return kOk;
}

// "synthetic", "synthetic:N" or "synthetic:N:SEED" regenerate images from the
// checkpoint's synthetic settings; anything else is a dataset directory.
std::vector<data::SegmentationSample> eval_samples(const std::string& spec, const app::RunConfig& cfg) {
  if (spec.rfind("synthetic", 0) == 0) {
    auto synth = cfg.dataset.synth;
    std::size_t count = cfg.dataset.count;
    std::string rest = spec.substr(9);
    if (!rest.empty()) {
      if (rest[0] != ':') throw std::invalid_argument("bad synthetic spec '" + spec + "'");
      rest = rest.substr(1);
      const auto c = rest.find(':');
      count = std::stoul(rest.substr(0, c));
      if (c != std::string::npos) synth.seed = std::stoull(rest.substr(c + 1));
    }
    auto samples = data::synth_dataset(synth, count);
    if (cfg.dataset.preprocess)
      for (auto& s : samples) s.image = data::preprocess(s.image, cfg.dataset.prep);
    return samples;
  }
  auto samples = data::load_dataset_dir(spec);
  if (cfg.dataset.preprocess)
    for (auto& s : samples) s.image = data::preprocess(s.image, cfg.dataset.prep);
  return samples;
}

int cmd_eval(const std::string& ckpt, const std::string& data_spec, const std::string& out) {
  app::RunConfig cfg;
  auto model = app::model_from_checkpoint(ckpt, &cfg);
  const auto samples = eval_samples(data_spec, cfg);
  const auto summary = app::evaluate(model, samples, cfg.patch_size, cfg.threshold);
  const auto j = summary.to_json();
  write_json(out, j);
  std::printf("%zu images  f1 %.4f  miou %.4f  auc %.4f\n", samples.size(), j["aggregate"]["f1"].get<double>(),
              j["aggregate"]["miou"].get<double>(), j["aggregate"]["auc"].get<double>());
  return kOk;
}

int cmd_gradcheck(bool inject_fault, const std::string& json_out) {
  const auto res = app::run_gradcheck_suite(inject_fault, [](const app::GradSuiteRow& r) {
    std::printf("%-24s %-8s %12.3e %6s  (%.2fs)\n", r.name.c_str(), r.kind.c_str(), r.report.max_rel_error,
                r.report.passed ? "ok" : "FAIL", r.seconds);
    std::fflush(stdout);
  });
  if (!json_out.empty()) write_json(json_out, res.to_json());
  for (const auto& name : res.failures()) std::printf("FAILED: %s\n", name.c_str());
  std::printf("%zu cases, %zu failed\n", res.rows.size(), res.failures().size());
  return res.passed ? kOk : kFailed;
}

int cmd_ablate(const std::string& config, const std::string& axis, const std::string& out, std::size_t seeds) {
  const auto cfg = app::load_config(config);
  app::AblationOptions opts;
  opts.seeds = seeds;
  opts.on_run = [](const std::string& arm, std::uint64_t seed, double f1) {
    std::printf("%-22s seed %llu  f1 %.4f\n", arm.c_str(), static_cast<unsigned long long>(seed), f1);
    std::fflush(stdout);
  };
  const auto j = app::run_ablation(cfg, app::parse_axis(axis), opts);
  write_json(out, j);
  for (const auto& row : j["arms"])
    std::printf("%-22s f1 %.4f  miou %.4f  auc %.4f\n", row["name"].get<std::string>().c_str(),
                row["f1"].get<double>(), row["miou"].get<double>(), row["auc"].get<double>());
  return kOk;
}

int cmd_render(const std::string& ckpt, const std::string& prob_path, const std::string& config,
               const std::string& sample_spec, const std::string& out) {
  app::RunConfig cfg;
  Tensor prob;
  std::optional<network::Model> model;
  if (!ckpt.empty()) {
    model.emplace(app::model_from_checkpoint(ckpt, &cfg));
  } else if (!config.empty()) {
    cfg = app::load_config(config);
  }
  const auto sample = app::resolve_sample(sample_spec, cfg);
  if (model) {
    prob = app::predict_full(*model, sample.image, cfg.patch_size);
  } else {
    prob = data::read_image(prob_path);
  }
  if (prob.rank() == 3 && prob.dim(0) == 1) prob = prob.reshaped({prob.dim(1), prob.dim(2)});
  const auto pred = metrics::Mask::from_tensor(prob, cfg.threshold);
  const auto target = metrics::Mask::from_tensor(sample.label);
  data::write_image(out, app::render_overlay(sample.image, pred, target));
  const auto c = metrics::confusion(pred, target);
  std::printf("%s: tp %zu  fp %zu  fn %zu  tn %zu -> %s\n", sample.id.c_str(), c.tp, c.fp, c.fn, c.tn, out.c_str());
  return kOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const app::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return e.line() ? kIoError : kFailed;
  } catch (const data::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kIoError;
  } catch (const data::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoError;
  } catch (const network::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error (%s): %s\n", network::to_string(e.kind()), e.what());
    return e.kind() == network::CheckpointError::Kind::mismatch ? kFailed : kIoError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoError;
  } catch (const app::TrainingError& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return kFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"AttUKAN retinal vessel segmentation"};
  cli.require_subcommand(1);

  std::string config, out, resume, ckpt, data_spec, axis, prob, sample, json_out;
  std::size_t seeds = 1;
  bool inject_fault = false;

  auto* train = cli.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--out", out, "output directory")->capture_default_str();
  train->add_option("--resume", resume, "checkpoint manifest to resume from");
  out = "run";

  auto* eval = cli.add_subcommand("eval", "evaluate a checkpoint on whole images");
  eval->add_option("--ckpt", ckpt, "checkpoint manifest")->required();
  eval->add_option("--data", data_spec, "dataset directory or synthetic[:N[:SEED]]")->required();
  eval->add_option("--out", out, "report JSON path")->required();

  auto* grad = cli.add_subcommand("gradcheck", "finite-difference check of every op, layer and loss");
  grad->add_flag("--inject-fault", inject_fault, "append a fixture with a broken backward rule");
  grad->add_option("--json", json_out, "also write the full report as JSON");

  auto* ablate = cli.add_subcommand("ablate", "train and compare the arms of one ablation axis");
  ablate->add_option("--config", config, "base config file")->required();
  ablate->add_option("--axis", axis, "attention, lpcl, lambda4 or feature_level")->required();
  ablate->add_option("--out", out, "comparison JSON path")->required();
  ablate->add_option("--seeds", seeds, "training seeds per arm")->capture_default_str();

  auto* render = cli.add_subcommand("render", "write a TP/FP/FN overlay as PPM");
  auto* ck = render->add_option("--ckpt", ckpt, "checkpoint manifest");
  auto* pr = render->add_option("--prob", prob, "probability map (PGM)");
  ck->excludes(pr);
  render->add_option("--config", config, "config for --prob mode (synthetic settings, preprocessing)");
  render->add_option("--sample", sample, "synthetic:K or DIR:STEM")->required();
  render->add_option("--out", out, "output PPM")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? kOk : kIoError;
  }

  if (*train) return guarded([&] { return cmd_train(config, out, resume); });
  if (*eval) return guarded([&] { return cmd_eval(ckpt, data_spec, out); });
  if (*grad) return guarded([&] { return cmd_gradcheck(inject_fault, json_out); });
  if (*ablate) return guarded([&] { return cmd_ablate(config, axis, out, seeds); });
  if (*render) {
    if (ckpt.empty() && prob.empty()) {
      std::fprintf(stderr, "render needs --ckpt or --prob\n");
      return kIoError;
    }
    return guarded([&] { return cmd_render(ckpt, prob, config, sample, out); });
  }
  return kFailed;
}
