#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attukan/numerics/tensor.hpp"

namespace attukan::metrics {

/// Thrown where a metric is undefined because a mask has no foreground.
class EmptyMaskError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Row-major binary image.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> px;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), px(h * w, 0) {}

  /// Pixels with value >= threshold become foreground. Accepts [H,W],
  /// [1,H,W] or [1,1,H,W].
  static Mask from_tensor(const Tensor& t, double threshold = 0.5);
  Tensor to_tensor() const;  // [H,W] of 0/1

  std::uint8_t& at(std::size_t y, std::size_t x) { return px[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return px[y * width + x]; }
  std::size_t size() const noexcept { return px.size(); }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const Mask&) const = default;
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Counts over the pixels where `valid` is set (all pixels when null).
ConfusionCounts confusion(const Mask& pred, const Mask& target, const Mask* valid = nullptr);

struct BasicMetrics {
  double acc = 0, se = 0, sp = 0, f1 = 0, miou = 0, miou_paper_literal = 0;
  /// Names of metrics whose denominator was zero (reported as 0).
  std::vector<std::string> undefined;
};

/// miou is the foreground IoU TP/(TP+FP+FN); miou_paper_literal is
/// 2TP/(TP+FP+FN).
BasicMetrics basic_metrics(const ConfusionCounts& c);

struct AucResult {
  double value = 0.5;
  bool defined = false;
};

/// Mann-Whitney estimate with midranks for ties. When the target has only one
/// class inside `valid`, returns 0.5 with defined = false.
AucResult roc_auc(const Tensor& prob, const Mask& target, const Mask* valid = nullptr);

/// Squared Euclidean distance from every pixel to the nearest foreground
/// pixel of `m` (exact). Infinity when `m` is empty.
std::vector<double> squared_distance_transform(const Mask& m);

/// Percentile q in [0,100] with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

/// Symmetric 95th-percentile Hausdorff distance. Throws EmptyMaskError.
double hd95(const Mask& a, const Mask& b);

/// Dilation by the disc {dx^2 + dy^2 <= r^2}.
Mask dilate_disc(const Mask& m, int radius);

/// Zhang-Suen thinning. Each subiteration marks candidates in parallel with
/// the usual neighbourhood tests; marked pixels are then removed in raster
/// order only while they are still simple points, so the number of
/// 8-connected components never changes.
Mask skeletonize(const Mask& m);

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster order of their first pixel). Returns the component count.
std::size_t label_components(const Mask& m, std::vector<std::uint32_t>* labels = nullptr);

struct CalMetrics {
  double c = 0, a = 0, l = 0, f = 0;
};

/// Connectivity, area and length scores of `pred` against `target`, with
/// dilation radii alpha (area) and beta (length). Throws EmptyMaskError when
/// the target is empty.
CalMetrics cal_metrics(const Mask& pred, const Mask& target, int alpha = 2, int beta = 2);

struct MetricsReport {
  double acc = 0, se = 0, sp = 0, f1 = 0, miou = 0, miou_paper_literal = 0, auc = 0;
  std::optional<double> hd95, c, a, l, f;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  static const std::vector<std::string>& keys();
};

/// Thresholds prob at `threshold` (ties to foreground) and computes every
/// metric. Undefined distance and morphology scores are left empty.
MetricsReport full_report(const Tensor& prob, const Mask& target, const Mask* valid = nullptr,
                          double threshold = 0.5);

}  // namespace attukan::metrics
