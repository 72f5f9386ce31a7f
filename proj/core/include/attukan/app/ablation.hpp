#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attukan/app/config.hpp"

namespace attukan::app {

enum class AblationAxis { attention, lpcl, lambda4, feature_level };

const char* to_string(AblationAxis a);
AblationAxis parse_axis(const std::string& s);

struct Arm {
  std::string name;
  RunConfig config;
};

/// attention: UKAN, AttUKAN (w/o LPCL), UKAN (w LPCL), AttUKAN.
/// lpcl: AttUKAN with and without the contrastive term.
/// lambda4: 0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0.
/// feature_level: 3, 4, 5.
/// Arms keep the base config's lambda4 wherever the contrastive term is on.
std::vector<Arm> ablation_arms(const RunConfig& base, AblationAxis axis);

struct AblationOptions {
  std::size_t seeds = 1;  // training seeds base.seed, base.seed + 1, ...
  std::function<void(const std::string& arm, std::uint64_t seed, double f1)> on_run;
};

/// Trains every arm once per seed on one shared data split and evaluates on
/// the held-out images. Returns
///   {"axis", "seeds", "arms": [{"name", "f1", "miou", "auc",
///     "runs": [{"seed", "f1", "miou", "auc", "data_hashes"}]}],
///    "shared_data_stream", "delta_f1_vs_first"}.
nlohmann::json run_ablation(const RunConfig& base, AblationAxis axis, const AblationOptions& opts = {});

}  // namespace attukan::app
