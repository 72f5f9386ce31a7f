#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "attukan/data/sample.hpp"

namespace attukan::data {

class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters of the branching-vessel image generator.
struct SynthConfig {
  std::size_t size = 128;
  std::size_t n_trees = 3;
  std::size_t branch_depth = 3;
  double w_min = 1.0;
  double w_max = 3.5;
  double tortuosity = 0.35;
  double contrast = 0.45;
  double noise_sigma = 0.03;
  double gradient_amplitude = 0.2;
  std::uint64_t seed = 0;

  static constexpr double kMinFraction = 0.03;
  static constexpr double kMaxFraction = 0.25;
  static constexpr int kMaxAttempts = 10;

  void validate() const;
};

/// Dark vessel trees on a bright, shaded, noisy background. Regenerates (up
/// to ten attempts) until the foreground fraction is within [0.03, 0.25].
SegmentationSample synth_sample(const SynthConfig& cfg);

/// `count` samples whose seeds derive from cfg.seed and the sample index.
std::vector<SegmentationSample> synth_dataset(const SynthConfig& cfg, std::size_t count);

/// 1 - contrast * blur3x3(label): the noiseless, unshaded image of a label.
Tensor render_label(const Tensor& label, double contrast);

}  // namespace attukan::data
