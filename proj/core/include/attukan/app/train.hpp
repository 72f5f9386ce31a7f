#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attukan/app/config.hpp"
#include "attukan/data/sample.hpp"
#include "attukan/metrics/metrics.hpp"
#include "attukan/network/model.hpp"

namespace attukan::app {

/// Raised when the training loss stops being finite.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSplit {
  std::vector<data::SegmentationSample> train;
  std::vector<data::SegmentationSample> val;
};

/// Synthetic or directory samples, preprocessed when configured.
std::vector<data::SegmentationSample> load_samples(const RunConfig& cfg);
/// Seeded by the data seed only, so every arm of an ablation sees the same split.
DatasetSplit split_samples(std::vector<data::SegmentationSample> samples, const RunConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double loss = 0, bce = 0, jaccard = 0, dice = 0, lpcl = 0;
  double val_f1 = 0;
  std::string data_hash;  // hash of the epoch's patch corners in visiting order

  nlohmann::json to_json() const;
};

struct TrainOptions {
  /// When set: writes train_log.jsonl, final.json/.bin and best.json/.bin here.
  std::optional<std::filesystem::path> out_dir;
  /// Continue from a checkpoint written by an earlier run of the same config.
  std::optional<std::filesystem::path> resume;
  /// Stop after this many epochs in total (the config's epoch count still
  /// defines the schedule). Used to interrupt a run.
  std::optional<std::size_t> stop_after;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  network::Model model;
  std::vector<EpochLog> history;
  double best_val_f1 = -1.0;
  std::size_t best_epoch = 0;
};

TrainResult train(const RunConfig& cfg, const TrainOptions& opts = {});
TrainResult train(const RunConfig& cfg, const DatasetSplit& split, const TrainOptions& opts = {});

/// Probability map [H,W] of a whole image [1,H,W] from overlapping patches
/// (stride patch/2, last window flush with the border), averaged where they
/// overlap. Eval-mode forward.
Tensor predict_full(network::Model& model, const Tensor& image, std::size_t patch);

/// Stitches per-window maps the same way predict_full does; exposed so the
/// stitching rule can be checked without a model.
Tensor stitch(std::size_t height, std::size_t width, std::size_t patch,
              const std::function<Tensor(std::size_t y, std::size_t x)>& window);

struct EvalSummary {
  std::vector<std::string> ids;
  std::vector<metrics::MetricsReport> reports;

  /// {"images": [{"id", "metrics"}], "aggregate": {...}, "undefined": {...}}.
  /// Aggregates are unweighted means; null entries are left out of a mean
  /// and counted under "undefined".
  nlohmann::json to_json() const;
  double mean_f1() const;
};

EvalSummary evaluate(network::Model& model, const std::vector<data::SegmentationSample>& samples,
                     std::size_t patch, double threshold);

/// Rebuilds the model described by a checkpoint's configuration echo and
/// loads its tensors.
network::Model model_from_checkpoint(const std::filesystem::path& manifest, RunConfig* cfg_out = nullptr);

}  // namespace attukan::app
