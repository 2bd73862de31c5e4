#include "clude/config.hpp"

#include "clude/errors.hpp"
#include "clude/model.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

namespace clude {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || p != end) {
    throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("config: '" + std::string(key) + "' expects true/false, got '" + std::string(text) + "'");
}

std::vector<Index> parse_index_list(std::string_view key, std::string_view text) {
  std::vector<Index> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_number<Index>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("config: '" + std::string(key) + "' expects a comma-separated list");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CLUDE_DOUBLE(K, M)                                                                               \
  Field {                                                                                                \
    K, [](RunConfig& c, std::string_view k, std::string_view v) { c.M = parse_number<double>(k, v); }, \
        [](const RunConfig& c) { return format_double(c.M); }                                            \
  }
#define CLUDE_INDEX(K, M)                                                                               \
  Field {                                                                                               \
    K, [](RunConfig& c, std::string_view k, std::string_view v) { c.M = parse_number<Index>(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.M); }                                          \
  }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      Field{"seed", [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = parse_number<std::uint64_t>(k, v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      CLUDE_DOUBLE("range.min", model.range.d_min),
      CLUDE_DOUBLE("range.max", model.range.d_max),
      CLUDE_INDEX("k", model.clu.k),
      CLUDE_DOUBLE("tau", model.trans.tau),
      CLUDE_DOUBLE("temperature", model.temperature),
      CLUDE_INDEX("enc.pre_width", model.enc.pre_width),
      CLUDE_INDEX("enc.base_width", model.enc.base_width),
      CLUDE_INDEX("enc.blocks", model.enc.blocks),
      Field{"enc.spp_bins",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.model.enc.spp_bins = parse_index_list(k, v); },
            [](const RunConfig& c) {
              std::string s;
              for (Index b : c.model.enc.spp_bins) s += (s.empty() ? "" : ",") + std::to_string(b);
              return s;
            }},
      CLUDE_INDEX("clu.m", model.clu.m),
      CLUDE_INDEX("clu.layers", model.clu.layers),
      CLUDE_INDEX("clu.heads", model.clu.heads),
      CLUDE_INDEX("clu.head_width", model.clu.head_width),
      Field{"trans.offsets",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.model.trans.offsets = parse_bool(k, v); },
            [](const RunConfig& c) { return std::string(c.model.trans.offsets ? "true" : "false"); }},
      CLUDE_DOUBLE("trans.band_scale", model.trans.band_scale),
      CLUDE_INDEX("trans.width_cap", model.trans.width_cap),
      CLUDE_INDEX("scene.height", scene.height),
      CLUDE_INDEX("scene.width", scene.width),
      Field{"scene.objects",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.scene.objects = parse_number<int>(k, v); },
            [](const RunConfig& c) { return std::to_string(c.scene.objects); }},
      CLUDE_DOUBLE("scene.density", scene.density),
      CLUDE_DOUBLE("scene.outlier_rate", scene.outlier_rate),
      CLUDE_INDEX("data.scenes", data.scenes),
      CLUDE_INDEX("data.test_scenes", data.test_scenes),
      CLUDE_INDEX("train.stage1_steps", train.stage1_steps),
      CLUDE_INDEX("train.stage2_steps", train.stage2_steps),
      CLUDE_INDEX("train.batch", train.batch),
      CLUDE_DOUBLE("train.lr", train.lr),
      CLUDE_DOUBLE("train.weight_decay", train.weight_decay),
      CLUDE_DOUBLE("train.clip", train.clip),
      CLUDE_DOUBLE("loss.ce", train.weights.ce),
      CLUDE_DOUBLE("loss.mae", train.weights.mae),
      CLUDE_DOUBLE("loss.mse", train.weights.mse),
  };
  return fields;
}

#undef CLUDE_DOUBLE
#undef CLUDE_INDEX

RunConfig desk_preset() {
  RunConfig c;
  c.preset = "desk";
  c.model.range = {0.0, 10.0};
  c.model.clu.k = 16;
  c.model.trans.tau = 0.25;
  c.model.enc.pre_width = 8;
  c.model.enc.base_width = 8;
  c.model.enc.blocks = 1;
  c.model.clu.m = 32;
  c.model.clu.layers = 1;
  c.model.clu.head_width = 16;
  c.scene.height = 64;
  c.scene.width = 64;
  c.scene.range = c.model.range;
  c.scene.objects = 4;
  c.scene.density = 0.05;
  c.data = {200, 40};
  c.train.stage1_steps = 6000;
  c.train.stage2_steps = 750;
  c.train.batch = 1;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() { return {"desk", "kitti", "void", "clude-dagger", "clude-dagger-ce"}; }

RunConfig make_preset(std::string_view name) {
  RunConfig c = desk_preset();
  if (name == "desk") return c;
  if (name == "clude-dagger") {
    c.preset = "clude-dagger";
    c.train.weights = {1.0, 1.0, 0.2};
    return c;
  }
  if (name == "clude-dagger-ce") {
    c.preset = "clude-dagger-ce";
    c.train.weights = {0.2, 1.0, 1.0};
    return c;
  }
  if (name == "kitti") {
    c.preset = "kitti";
    c.model.range = {0.0, 90.0};
    c.model.clu.k = 32;
    c.model.trans.tau = 0.5;
    c.train.batch = 8;
    c.train.lr = 5e-4;
  } else if (name == "void") {
    c.preset = "void";
    c.model.range = {0.2, 5.0};
    c.model.clu.k = 16;
    c.model.trans.tau = 0.25;
    c.train.batch = 16;
    c.train.lr = 5e-4;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += " " + n;
    throw ConfigError("config: unknown preset '" + std::string(name) + "' (known:" + known + ")");
  }
  c.scene.range = c.model.range;
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys{"preset"};
  for (const Field& f : schema()) keys.emplace_back(f.key);
  return keys;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "preset") {
    const std::uint64_t seed = cfg.seed;
    cfg = make_preset(value);
    cfg.seed = seed;
    return;
  }
  for (const Field& f : schema()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      cfg.scene.range = cfg.model.range;
      return;
    }
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

std::pair<std::string, std::string> split_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("config: expected key=value, got '" + std::string(text) + "'");
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      const auto [k, v] = split_assignment(t);
      apply_setting(cfg, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out = "preset = " + cfg.preset + "\n";
  for (const Field& f : schema()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

void validate(const RunConfig& cfg) {
  validate(cfg.model);
  cfg.train.weights.validate();
  if (cfg.scene.height <= 0 || cfg.scene.width <= 0 || cfg.scene.height % 8 != 0 || cfg.scene.width % 8 != 0) {
    throw ConfigError("config: scene.height and scene.width must be positive multiples of 8");
  }
  if (cfg.scene.objects < 0) throw ConfigError("config: scene.objects must be >= 0");
  if (!(cfg.scene.density > 0.0 && cfg.scene.density <= 1.0)) {
    throw ConfigError("config: scene.density must lie in (0, 1]");
  }
  if (!(cfg.scene.outlier_rate >= 0.0 && cfg.scene.outlier_rate <= 1.0)) {
    throw ConfigError("config: scene.outlier_rate must lie in [0, 1]");
  }
  if (cfg.data.scenes <= 0 || cfg.data.test_scenes < 0 || cfg.data.test_scenes >= cfg.data.scenes) {
    throw ConfigError("config: need data.scenes > data.test_scenes >= 0");
  }
  const TrainConfig& t = cfg.train;
  if (t.stage1_steps < 0 || t.stage2_steps < 0) throw ConfigError("config: step counts must be >= 0");
  if (t.batch <= 0) throw ConfigError("config: train.batch must be positive");
  if (!(t.lr > 0.0)) throw ConfigError("config: train.lr must be positive");
  if (!(t.weight_decay >= 0.0 && t.weight_decay < 1.0)) throw ConfigError("config: train.weight_decay must lie in [0, 1)");
  if (!(t.clip >= 0.0)) throw ConfigError("config: train.clip must be >= 0");
}

std::uint64_t scene_seed(std::uint64_t seed, Index index) {
  return seed * 1000003ULL + static_cast<std::uint64_t>(index);
}

}  // namespace clude
