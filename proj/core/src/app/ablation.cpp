#include "attukan/app/ablation.hpp"

#include <cstdio>
#include <stdexcept>

#include "attukan/app/train.hpp"

namespace attukan::app {

using nlohmann::json;

const char* to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::attention: return "attention";
    case AblationAxis::lpcl: return "lpcl";
    case AblationAxis::lambda4: return "lambda4";
    case AblationAxis::feature_level: return "feature_level";
  }
  return "unknown";
}

AblationAxis parse_axis(const std::string& s) {
  for (auto a : {AblationAxis::attention, AblationAxis::lpcl, AblationAxis::lambda4, AblationAxis::feature_level})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown ablation axis '" + s + "' (attention, lpcl, lambda4, feature_level)");
}

std::vector<Arm> ablation_arms(const RunConfig& base, AblationAxis axis) {
  auto arm = [&](std::string name, bool gates, double lambda4) {
    RunConfig c = base;
    c.model.use_attention_gates = gates;
    c.weights.lambda4 = lambda4;
    return Arm{std::move(name), c};
  };
  const double l4 = base.weights.lambda4;
  std::vector<Arm> arms;
  switch (axis) {
    case AblationAxis::attention:
      arms.push_back(arm("UKAN", false, 0.0));
      arms.push_back(arm("AttUKAN (w/o LPCL)", true, 0.0));
      arms.push_back(arm("UKAN (w LPCL)", false, l4));
      arms.push_back(arm("AttUKAN", true, l4));
      break;
    case AblationAxis::lpcl:
      arms.push_back(arm("AttUKAN (w/o LPCL)", true, 0.0));
      arms.push_back(arm("AttUKAN (w LPCL)", true, l4));
      break;
    case AblationAxis::lambda4:
      for (double v : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "lambda4=%.1f", v);
        arms.push_back(arm(buf, true, v));
      }
      break;
    case AblationAxis::feature_level:
      for (std::size_t level : {3, 4, 5}) {
        Arm a = arm("level " + std::to_string(level), true, l4);
        a.config.lpcl.feature_level = level;
        arms.push_back(std::move(a));
      }
      break;
  }
  return arms;
}

json run_ablation(const RunConfig& base, AblationAxis axis, const AblationOptions& opts) {
  if (opts.seeds == 0) throw std::invalid_argument("ablation needs at least one seed");
  base.validate();
  const DatasetSplit split = split_samples(load_samples(base), base);
  const auto arms = ablation_arms(base, axis);

  json rows = json::array();
  std::vector<std::vector<std::vector<std::string>>> hashes(arms.size());
  for (std::size_t a = 0; a < arms.size(); ++a) {
    json runs = json::array();
    double f1 = 0, miou = 0, auc = 0;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
      RunConfig cfg = arms[a].config;
      cfg.seed = base.seed + s;
      auto r = train(cfg, split);
      const auto summary = evaluate(r.model, split.val, cfg.patch_size, cfg.threshold);
      const json agg = summary.to_json()["aggregate"];
      std::vector<std::string> h;
      for (const auto& e : r.history) h.push_back(e.data_hash);
      hashes[a].push_back(h);
      const double rf1 = agg["f1"].get<double>(), rmiou = agg["miou"].get<double>(), rauc = agg["auc"].get<double>();
      runs.push_back({{"seed", cfg.seed}, {"f1", rf1}, {"miou", rmiou}, {"auc", rauc}, {"data_hashes", h}});
      f1 += rf1;
      miou += rmiou;
      auc += rauc;
      if (opts.on_run) opts.on_run(arms[a].name, cfg.seed, rf1);
    }
    const double n = static_cast<double>(opts.seeds);
    rows.push_back({{"name", arms[a].name},
                    {"use_attention_gates", arms[a].config.model.use_attention_gates},
                    {"lambda4", arms[a].config.weights.lambda4},
                    {"feature_level", arms[a].config.lpcl.feature_level},
                    {"f1", f1 / n},
                    {"miou", miou / n},
                    {"auc", auc / n},
                    {"runs", runs}});
  }
  bool shared = true;
  for (std::size_t a = 1; a < arms.size(); ++a) shared = shared && hashes[a] == hashes[0];
  json deltas = json::object();
  for (std::size_t a = 1; a < arms.size(); ++a)
    deltas[arms[a].name] = rows[a]["f1"].get<double>() - rows[0]["f1"].get<double>();

  return {{"axis", to_string(axis)},
          {"seeds", opts.seeds},
          {"base_seed", base.seed},
          {"held_out_images", split.val.size()},
          {"arms", rows},
          {"shared_data_stream", shared},
          {"delta_f1_vs_first", deltas}};
}

}  // namespace attukan::app
