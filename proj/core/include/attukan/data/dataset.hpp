#pragma once

#include <filesystem>
#include <vector>

#include "attukan/data/sample.hpp"

namespace attukan::data {

/// Loads `images/*.pgm|ppm`, `labels/*.pgm` and optional `masks/*.pgm`,
/// matched by file stem and returned in stem order. Images are converted to
/// gray [1,H,W]; labels and masks are thresholded at 0.5.
std::vector<SegmentationSample> load_dataset_dir(const std::filesystem::path& dir);

/// Writes a dataset in the layout read by load_dataset_dir.
void save_dataset_dir(const std::filesystem::path& dir, const std::vector<SegmentationSample>& samples);

}  // namespace attukan::data
