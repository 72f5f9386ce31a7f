#include "attukan/app/config.hpp"

#include "attukan/data/image_io.hpp"

#include <charconv>
#include <limits>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace attukan::app {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("expected a nonnegative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field real(std::string key, double& ref) {
  return {std::move(key), [&ref](const std::string& s) { ref = parse_double(s); },
          [&ref] { return fmt_double(ref); }};
}

template <class T>
Field uint(std::string key, T& ref) {
  return {std::move(key), [&ref](const std::string& s) { ref = static_cast<T>(parse_uint(s)); },
          [&ref] { return std::to_string(ref); }};
}

Field boolean(std::string key, bool& ref) {
  return {std::move(key), [&ref](const std::string& s) { ref = parse_bool(s); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& m = c.model;
  auto& d = c.dataset;
  std::vector<Field> f;
  f.push_back({"model.channels",
               [&m](const std::string& s) {
                 std::vector<std::size_t> ch;
                 std::stringstream ss(s);
                 std::string item;
                 while (std::getline(ss, item, ',')) ch.push_back(parse_uint(trim(item)));
                 m.channels = ch;
               },
               [&m] {
                 std::string s;
                 for (std::size_t i = 0; i < m.channels.size(); ++i)
                   s += (i ? "," : "") + std::to_string(m.channels[i]);
                 return s;
               }});
  f.push_back(boolean("model.attention", m.use_attention_gates));
  f.push_back({"model.bottleneck", [&m](const std::string& s) { m.bottleneck = network::parse_bottleneck(s); },
               [&m] { return std::string(network::to_string(m.bottleneck)); }});
  f.push_back(uint("model.kan_layers", m.kan_layers));
  f.push_back(real("model.grid_min", m.spline.grid_min));
  f.push_back(real("model.grid_max", m.spline.grid_max));
  f.push_back(uint("model.grid_count", m.spline.grid_count));
  f.push_back(uint("model.spline_order", m.spline.order));
  f.push_back(uint("model.input_channels", m.input_channels));

  f.push_back(real("loss.lambda1", c.weights.lambda1));
  f.push_back(real("loss.lambda2", c.weights.lambda2));
  f.push_back(real("loss.lambda3", c.weights.lambda3));
  f.push_back(real("loss.lambda4", c.weights.lambda4));

  f.push_back(real("optimizer.lr", c.optimizer.lr));
  f.push_back(real("optimizer.beta1", c.optimizer.beta1));
  f.push_back(real("optimizer.beta2", c.optimizer.beta2));
  f.push_back(real("optimizer.eps", c.optimizer.eps));

  f.push_back(uint("train.epochs", c.epochs));
  f.push_back(uint("train.batch_size", c.batch_size));
  f.push_back(uint("train.patch_size", c.patch_size));
  f.push_back(uint("train.patches_per_image", c.patches_per_image));
  f.push_back(real("train.val_fraction", c.val_fraction));
  f.push_back(real("train.threshold", c.threshold));
  f.push_back(uint("train.seed", c.seed));

  f.push_back({"data.source",
               [&d](const std::string& s) {
                 if (s == "synthetic") d.synthetic = true;
                 else if (s == "directory") d.synthetic = false;
                 else throw std::invalid_argument("expected synthetic or directory, got '" + s + "'");
               },
               [&d] { return std::string(d.synthetic ? "synthetic" : "directory"); }});
  f.push_back({"data.dir", [&d](const std::string& s) { d.dir = s; }, [&d] { return d.dir.string(); }});
  f.push_back(uint("data.count", d.count));
  f.push_back(uint("data.size", d.synth.size));
  f.push_back(uint("data.n_trees", d.synth.n_trees));
  f.push_back(uint("data.branch_depth", d.synth.branch_depth));
  f.push_back(real("data.w_min", d.synth.w_min));
  f.push_back(real("data.w_max", d.synth.w_max));
  f.push_back(real("data.tortuosity", d.synth.tortuosity));
  f.push_back(real("data.contrast", d.synth.contrast));
  f.push_back(real("data.noise_sigma", d.synth.noise_sigma));
  f.push_back(real("data.gradient_amplitude", d.synth.gradient_amplitude));
  f.push_back(uint("data.seed", d.synth.seed));
  f.push_back(boolean("data.preprocess", d.preprocess));
  f.push_back(real("data.clip_limit", d.prep.clip_limit));
  f.push_back(uint("data.tiles", d.prep.tiles));
  f.push_back(real("data.gamma", d.prep.gamma));

  f.push_back(real("lpcl.tau", c.lpcl.tau));
  f.push_back({"lpcl.mode", [&c](const std::string& s) { c.lpcl.mode = losses::parse_lpcl_mode(s); },
               [&c] { return std::string(losses::to_string(c.lpcl.mode)); }});
  f.push_back(uint("lpcl.feature_level", c.lpcl.feature_level));

  f.push_back(real("augment.brightness", c.augment.brightness));
  f.push_back(real("augment.contrast_min", c.augment.contrast_min));
  f.push_back(real("augment.contrast_max", c.augment.contrast_max));
  f.push_back(real("augment.noise_sigma", c.augment.noise_sigma));
  f.push_back(boolean("augment.hflip", c.augment.hflip));
  return f;
}

void set_field(std::vector<Field>& fs, const std::string& key, const std::string& value, std::size_t line) {
  for (auto& f : fs)
    if (f.key == key) {
      try {
        f.set(value);
      } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what(), line);
      }
      return;
    }
  throw ConfigError("unknown key '" + key + "'", line);
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m, 0); };
  try {
    model.validate();
    weights.validate();
    dataset.synth.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (!(optimizer.lr > 0.0)) fail("optimizer.lr must be positive");
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0)
    fail("optimizer betas must be in [0, 1)");
  if (batch_size == 0) fail("train.batch_size must be positive");
  if (patches_per_image == 0) fail("train.patches_per_image must be positive");
  if (patch_size == 0 || patch_size % network::ModelConfig::kSpatialMultiple != 0)
    fail("train.patch_size must be a positive multiple of 16");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("train.val_fraction must be in (0, 1)");
  if (!(threshold > 0.0 && threshold < 1.0)) fail("train.threshold must be in (0, 1)");
  if (lpcl.feature_level < 1 || lpcl.feature_level > network::ModelConfig::kLevels)
    fail("lpcl.feature_level must be between 1 and 5");
  if (!(lpcl.tau > 0.0)) fail("lpcl.tau must be positive");
  if (dataset.synthetic) {
    if (dataset.count < 2) fail("data.count must be at least 2 (one training and one validation image)");
    if (dataset.synth.size < patch_size) fail("data.size must be at least train.patch_size");
  } else if (dataset.dir.empty()) {
    fail("data.dir is required when data.source = directory");
  }
  if (augment.contrast_min > augment.contrast_max || augment.contrast_min <= 0.0)
    fail("augment contrast range must satisfy 0 < contrast_min <= contrast_max");
  if (augment.brightness < 0.0 || augment.noise_sigma < 0.0) fail("augment magnitudes must be nonnegative");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  auto fs = fields(cfg);
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'section.key = value'", line);
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.find('.') == std::string::npos) throw ConfigError("key '" + key + "' has no section", line);
    if (value.empty()) throw ConfigError("missing value for '" + key + "'", line);
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'", line);
    set_field(fs, key, value, line);
  }
  cfg.model.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data::IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& f : fields(copy)) {
    const std::string v = f.get();
    if (!v.empty()) out += f.key + " = " + v + "\n";  // an unset data.dir stays unset
  }
  return out;
}

nlohmann::json to_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields(copy)) j[f.key] = f.get();
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig cfg;
  auto fs = fields(cfg);
  if (!j.is_object()) throw ConfigError("config JSON must be an object", 0);
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ConfigError("config value for '" + key + "' must be a string", 0);
    set_field(fs, key, value.get<std::string>(), 0);
  }
  cfg.model.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

}  // namespace attukan::app
