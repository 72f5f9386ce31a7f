#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "attukan/numerics/tape.hpp"

namespace attukan::losses {

/// Coefficients of the hybrid objective
///   lambda1 * BCE + lambda2 * jaccard + lambda3 * dice + lambda4 * LPCL.
struct LossWeights {
  double lambda1 = 0.8;
  double lambda2 = 0.2;
  double lambda3 = 1.0;
  double lambda4 = 0.3;

  /// Throws std::invalid_argument if any coefficient is negative or non-finite.
  void validate() const;
};

enum class LpclMode { label_masked, view_only };

const char* to_string(LpclMode m);
LpclMode parse_lpcl_mode(const std::string& s);

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kOverlapSmooth = 1e-6;

/// Features of 2N augmented views. Views 2i and 2i+1 (0-based) come from the
/// same source patch; `view_pairing[i]` names the positive partner of view i
/// (a value equal to i, or out of range, means "no positive").
struct ContrastiveBatch {
  Var features;                          // [2N, D, S, S]
  Tensor labels_ds = Tensor::scalar(0);  // [2N, S, S] binary
  std::vector<std::size_t> view_pairing;
  double tau = 0.5;
};

/// Pairing {1, 0, 3, 2, ...} for views stored as adjacent pairs.
std::vector<std::size_t> adjacent_pairing(std::size_t views);

/// Average-pools labels [B,H,W] or [B,1,H,W] down to [B,S,S] and thresholds
/// the result at 0.5. H and W must be multiples of S.
Tensor downsample_labels(const Tensor& labels, std::size_t size);

/// Mean binary cross-entropy; pred is clamped to [1e-7, 1 - 1e-7].
Var bce(GradTape& t, Var pred, const Tensor& target);
/// 1 - (2 sum(p y) + s) / (sum p + sum y + s).
Var dice_loss(GradTape& t, Var pred, const Tensor& target);
/// 1 - (sum(p y) + s) / (sum p + sum y - sum(p y) + s).
Var jaccard_loss(GradTape& t, Var pred, const Tensor& target);

/// Pixel-wise contrastive loss over same-location features of all views,
/// summed over anchors. Features are L2-normalised per pixel so that the
/// similarity is the cosine. In label_masked mode a location counts for the
/// pair (i, j) only where both views carry the same downsampled label.
Var lpcl(GradTape& t, const ContrastiveBatch& batch, LpclMode mode = LpclMode::label_masked);

struct LossBreakdown {
  Var total;
  double bce = 0.0;
  double jaccard = 0.0;
  double dice = 0.0;
  double lpcl = 0.0;
  double value = 0.0;
};

/// Weighted sum of the four terms. With `batch == nullptr` the contrastive
/// term is omitted (reported as 0).
LossBreakdown hybrid_loss(GradTape& t, Var pred, const Tensor& target,
                          const ContrastiveBatch* batch, const LossWeights& w,
                          LpclMode mode = LpclMode::label_masked);

}  // namespace attukan::losses
