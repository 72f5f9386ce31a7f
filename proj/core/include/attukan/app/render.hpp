#pragma once

#include <string>

#include "attukan/app/config.hpp"
#include "attukan/data/sample.hpp"
#include "attukan/metrics/metrics.hpp"

namespace attukan::app {

/// Overlay [3,H,W]: TP green, FP yellow, FN red, TN the grayscale input.
/// gray is [H,W] or [1,H,W] in [0,1].
Tensor render_overlay(const Tensor& gray, const metrics::Mask& pred, const metrics::Mask& target);

/// "synthetic:K" picks image K of the config's synthetic set; "DIR:STEM" picks
/// the sample with that stem from a dataset directory. Preprocessing follows
/// the config either way.
data::SegmentationSample resolve_sample(const std::string& spec, const RunConfig& cfg);

}  // namespace attukan::app
