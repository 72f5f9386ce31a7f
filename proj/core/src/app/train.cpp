#include "attukan/app/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "attukan/data/dataset.hpp"
#include "attukan/data/preprocess.hpp"
#include "attukan/data/sampling.hpp"
#include "attukan/data/synth.hpp"
#include "attukan/losses/losses.hpp"
#include "attukan/network/checkpoint.hpp"
#include "attukan/numerics/adam.hpp"
#include "attukan/numerics/init.hpp"

namespace attukan::app {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<data::SegmentationSample> load_samples(const RunConfig& cfg) {
  std::vector<data::SegmentationSample> samples =
      cfg.dataset.synthetic ? data::synth_dataset(cfg.dataset.synth, cfg.dataset.count)
                            : data::load_dataset_dir(cfg.dataset.dir);
  if (cfg.dataset.preprocess)
    for (auto& s : samples) s.image = data::preprocess(s.image, cfg.dataset.prep);
  return samples;
}

DatasetSplit split_samples(std::vector<data::SegmentationSample> samples, const RunConfig& cfg) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("need at least two samples to split into train and validation");
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  data::Rng rng(mix_seed(cfg.dataset.synth.seed, 0x73706c6974ULL));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  DatasetSplit split;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? split.val : split.train).push_back(std::move(samples[i]));
  return split;
}

json EpochLog::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["steps"] = steps;
  j["loss"] = loss;
  j["bce"] = bce;
  j["jaccard"] = jaccard;
  j["dice"] = dice;
  j["lpcl"] = lpcl;
  j["val_f1"] = val_f1;
  j["data_hash"] = data_hash;
  return j;
}

namespace {

std::vector<std::size_t> window_starts(std::size_t n, std::size_t patch) {
  if (patch > n) throw DimensionError("image side " + std::to_string(n) + " is smaller than the patch size " +
                                      std::to_string(patch));
  const std::size_t stride = std::max<std::size_t>(1, patch / 2);
  std::vector<std::size_t> s;
  for (std::size_t p = 0; p + patch < n; p += stride) s.push_back(p);
  s.push_back(n - patch);
  return s;
}

std::string rng_state(const data::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

network::CheckpointMeta make_meta(const RunConfig& cfg, std::size_t epoch, const data::Rng& rng,
                                  const TrainResult& r) {
  network::CheckpointMeta meta;
  meta.config = to_json(cfg);
  meta.training["epoch"] = epoch;
  meta.training["rng"] = rng_state(rng);
  meta.training["best_val_f1"] = r.best_val_f1;
  meta.training["best_epoch"] = r.best_epoch;
  return meta;
}

void dump_diagnostic(const fs::path& path, std::size_t epoch, std::size_t step,
                     const losses::LossBreakdown& lb, const ParamStore& store) {
  json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["terms"] = {{"bce", lb.bce}, {"jaccard", lb.jaccard}, {"dice", lb.dice}, {"lpcl", lb.lpcl}};
  json bad = json::array();
  for (const auto& e : store.entries())
    if (!e.value.all_finite()) bad.push_back(e.name);
  j["nonfinite_parameters"] = bad;
  std::ofstream(path) << j.dump(2) << "\n";
}

}  // namespace

Tensor stitch(std::size_t height, std::size_t width, std::size_t patch,
              const std::function<Tensor(std::size_t, std::size_t)>& window) {
  Tensor sum({height, width}), count({height, width});
  for (std::size_t y : window_starts(height, patch))
    for (std::size_t x : window_starts(width, patch)) {
      const Tensor w = window(y, x);
      for (std::size_t i = 0; i < patch; ++i)
        for (std::size_t j = 0; j < patch; ++j) {
          sum[(y + i) * width + x + j] += w[i * patch + j];
          count[(y + i) * width + x + j] += 1.0;
        }
    }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  return sum;
}

Tensor predict_full(network::Model& model, const Tensor& image, std::size_t patch) {
  require_rank(image, 3, "predict_full image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  const auto ys = window_starts(h, patch), xs = window_starts(w, patch);
  std::vector<std::pair<std::size_t, std::size_t>> corners;
  for (std::size_t y : ys)
    for (std::size_t x : xs) corners.emplace_back(y, x);

  // Run all windows in small batches, then stitch from the cached outputs.
  constexpr std::size_t kChunk = 8;
  std::vector<Tensor> out(corners.size());
  for (std::size_t c0 = 0; c0 < corners.size(); c0 += kChunk) {
    const std::size_t nb = std::min(kChunk, corners.size() - c0);
    Tensor batch({nb, 1, patch, patch});
    for (std::size_t b = 0; b < nb; ++b) {
      const auto [y, x] = corners[c0 + b];
      for (std::size_t i = 0; i < patch; ++i)
        std::copy_n(image.ptr() + (y + i) * w + x, patch, batch.ptr() + (b * patch + i) * patch);
    }
    GradTape tape(false);
    const Tensor& prob = tape.value(model.forward(tape, batch, false).prob);
    for (std::size_t b = 0; b < nb; ++b) {
      Tensor t({patch, patch});
      std::copy_n(prob.ptr() + b * patch * patch, patch * patch, t.ptr());
      out[c0 + b] = std::move(t);
    }
  }
  std::size_t next = 0;
  return stitch(h, w, patch, [&](std::size_t, std::size_t) { return out[next++]; });
}

json EvalSummary::to_json() const {
  json j;
  json images = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i)
    images.push_back({{"id", ids[i]}, {"metrics", reports[i].to_json()}});
  j["images"] = images;
  json agg = json::object(), undefined = json::object();
  for (const auto& key : metrics::MetricsReport::keys()) {
    double s = 0.0;
    std::size_t n = 0, missing = 0;
    for (const auto& r : reports) {
      const json v = r.to_json()[key];
      if (v.is_null()) {
        ++missing;
      } else {
        s += v.get<double>();
        ++n;
      }
    }
    agg[key] = n ? json(s / static_cast<double>(n)) : json(nullptr);
    undefined[key] = missing;
  }
  j["aggregate"] = agg;
  j["undefined"] = undefined;
  j["count"] = reports.size();
  return j;
}

double EvalSummary::mean_f1() const {
  if (reports.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : reports) s += r.f1;
  return s / static_cast<double>(reports.size());
}

EvalSummary evaluate(network::Model& model, const std::vector<data::SegmentationSample>& samples,
                     std::size_t patch, double threshold) {
  EvalSummary s;
  for (const auto& sample : samples) {
    const Tensor prob = predict_full(model, sample.image, patch);
    const metrics::Mask target = metrics::Mask::from_tensor(sample.label);
    std::optional<metrics::Mask> valid;
    if (sample.mask) valid = metrics::Mask::from_tensor(*sample.mask);
    s.ids.push_back(sample.id);
    s.reports.push_back(metrics::full_report(prob, target, valid ? &*valid : nullptr, threshold));
  }
  return s;
}

TrainResult train(const RunConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  return train(cfg, split_samples(load_samples(cfg), cfg), opts);
}

TrainResult train(const RunConfig& cfg_in, const DatasetSplit& split, const TrainOptions& opts) {
  RunConfig cfg = cfg_in;
  cfg.model.seed = cfg.seed;
  cfg.validate();
  if (split.train.empty() || split.val.empty()) throw std::invalid_argument("empty training or validation split");

  TrainResult r{network::Model(cfg.model), {}, -1.0, 0};
  ParamStore& params = r.model.params();
  data::Rng rng(mix_seed(cfg.seed, 0x747261696eULL));
  std::size_t start = 0;

  if (opts.resume) {
    const auto meta = network::load_checkpoint(*opts.resume, params);
    if (meta.config != to_json(cfg))
      throw ConfigError("checkpoint " + opts.resume->string() + " was written by a different configuration", 0);
    start = meta.training.at("epoch").get<std::size_t>();
    std::istringstream(meta.training.at("rng").get<std::string>()) >> rng;
    r.best_val_f1 = meta.training.value("best_val_f1", -1.0);
    r.best_epoch = meta.training.value("best_epoch", std::size_t{0});
  }

  std::ofstream log;
  if (opts.out_dir) {
    fs::create_directories(*opts.out_dir);
    log.open(*opts.out_dir / "train_log.jsonl", opts.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (*opts.out_dir / "train_log.jsonl").string());
  }
  auto save = [&](const std::string& name, std::size_t epoch) {
    if (opts.out_dir) network::save_checkpoint(*opts.out_dir / (name + ".json"), params, make_meta(cfg, epoch, rng, r));
  };

  const std::size_t P = cfg.patch_size;
  const std::size_t level = cfg.lpcl.feature_level;
  const std::size_t S = P >> (level - 1);
  const std::size_t end = std::min(cfg.epochs, opts.stop_after.value_or(cfg.epochs));
  if (start >= end) save("final", start);

  for (std::size_t epoch = start; epoch < end; ++epoch) {
    struct Item {
      std::size_t image;
      data::Patch patch;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < split.train.size(); ++i)
      for (auto& p : data::sample_patches(split.train[i], cfg.patches_per_image, P, rng))
        items.push_back({i, std::move(p)});
    std::shuffle(items.begin(), items.end(), rng);
    std::uint64_t h = stable_hash("patches");
    for (const auto& it : items)
      h = stable_hash(std::to_string(it.image) + ":" + std::to_string(it.patch.y) + ":" + std::to_string(it.patch.x), h);

    EpochLog el;
    el.epoch = epoch + 1;
    el.data_hash = hex(h);
    for (std::size_t b0 = 0; b0 < items.size(); b0 += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, items.size() - b0);
      Tensor images({2 * nb, 1, P, P}), targets({2 * nb, 1, P, P});
      for (std::size_t k = 0; k < nb; ++k) {
        const auto& p = items[b0 + k].patch;
        auto [va, vb] = data::augment_two_views(p.image, p.label, rng, cfg.augment);
        const std::size_t plane = P * P;
        std::copy_n(va.image.ptr(), plane, images.ptr() + (2 * k) * plane);
        std::copy_n(vb.image.ptr(), plane, images.ptr() + (2 * k + 1) * plane);
        std::copy_n(va.label.ptr(), plane, targets.ptr() + (2 * k) * plane);
        std::copy_n(vb.label.ptr(), plane, targets.ptr() + (2 * k + 1) * plane);
      }

      GradTape tape;
      const auto fr = r.model.forward(tape, images, true);
      losses::ContrastiveBatch cb;
      cb.features = fr.features[level - 1];
      cb.labels_ds = losses::downsample_labels(targets, S);
      cb.view_pairing = losses::adjacent_pairing(2 * nb);
      cb.tau = cfg.lpcl.tau;
      const auto lb = losses::hybrid_loss(tape, fr.prob, targets, &cb, cfg.weights, cfg.lpcl.mode);
      if (!std::isfinite(lb.value)) {
        if (opts.out_dir) dump_diagnostic(*opts.out_dir / "diagnostic.json", epoch + 1, el.steps + 1, lb, params);
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                            std::to_string(el.steps + 1) + " (bce " + std::to_string(lb.bce) + ", jaccard " +
                            std::to_string(lb.jaccard) + ", dice " + std::to_string(lb.dice) + ", lpcl " +
                            std::to_string(lb.lpcl) + ")");
      }
      tape.backward(lb.total);
      adam_step(params, cfg.optimizer);
      params.zero_grad();

      ++el.steps;
      el.loss += lb.value;
      el.bce += lb.bce;
      el.jaccard += lb.jaccard;
      el.dice += lb.dice;
      el.lpcl += lb.lpcl;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, el.steps));
    el.loss /= n;
    el.bce /= n;
    el.jaccard /= n;
    el.dice /= n;
    el.lpcl /= n;
    el.val_f1 = evaluate(r.model, split.val, P, cfg.threshold).mean_f1();

    r.history.push_back(el);
    if (log) log << el.to_json().dump() << "\n" << std::flush;
    if (opts.on_epoch) opts.on_epoch(el);
    if (el.val_f1 > r.best_val_f1) {
      r.best_val_f1 = el.val_f1;
      r.best_epoch = el.epoch;
      save("best", el.epoch);
    }
    save("final", el.epoch);
  }
  return r;
}

network::Model model_from_checkpoint(const fs::path& manifest, RunConfig* cfg_out) {
  const json m = network::read_manifest(manifest);
  RunConfig cfg = from_json(m.value("config", json::object()));
  cfg.model.seed = cfg.seed;
  network::Model model(cfg.model);
  network::load_checkpoint(manifest, model.params());
  if (cfg_out) *cfg_out = cfg;
  return model;
}

}  // namespace attukan::app
