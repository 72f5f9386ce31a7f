#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "attukan/data/preprocess.hpp"
#include "attukan/data/sampling.hpp"
#include "attukan/data/synth.hpp"
#include "attukan/losses/losses.hpp"
#include "attukan/network/model.hpp"
#include "attukan/numerics/adam.hpp"

namespace attukan::app {

/// Config-file problem; `line` is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct DatasetConfig {
  bool synthetic = true;
  std::filesystem::path dir;  // used when !synthetic
  std::size_t count = 20;     // synthetic image count
  data::SynthConfig synth;
  bool preprocess = true;
  data::PreprocessOptions prep;
};

struct LpclConfig {
  double tau = 0.5;
  losses::LpclMode mode = losses::LpclMode::label_masked;
  std::size_t feature_level = 5;  // 1-based encoder level whose output is contrasted
};

struct RunConfig {
  network::ModelConfig model;
  losses::LossWeights weights;
  AdamOptions optimizer;
  std::size_t epochs = 100;
  std::size_t batch_size = 25;
  std::size_t patch_size = 64;
  std::size_t patches_per_image = 10;
  double val_fraction = 0.1;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  LpclConfig lpcl;
  data::AugmentOptions augment;

  /// Throws ConfigError (line 0) on inconsistent values.
  void validate() const;
};

/// Parses `section.key = value` lines; `#` starts a comment. Unknown keys,
/// malformed values and duplicates are errors carrying the line number.
RunConfig parse_config(const std::string& text);
/// Throws data::IoError when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Round-trippable text form (every set key, canonical order).
std::string to_text(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& j);

}  // namespace attukan::app
