#pragma once

// Run configuration: named presets, plain-text key=value files and overrides.

#include "clude/model_config.hpp"
#include "clude/objective.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace clude {

struct DataConfig {
  Index scenes = 200;
  Index test_scenes = 40;  ///< the last `test_scenes` of the manifest are held out
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  ModelConfig model;
  SceneConfig scene;
  DataConfig data;
  TrainConfig train;
};

/// Names accepted by make_preset.
std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
RunConfig make_preset(std::string_view name);

/// Sets one key from its text value; throws ConfigError for unknown keys or bad values.
/// The key "preset" resets every other key to that preset's values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// "key = value" lines; blank lines and lines starting with '#' are ignored.
void apply_config_text(RunConfig& cfg, std::string_view text);
/// Splits "key=value".
std::pair<std::string, std::string> split_assignment(std::string_view text);

/// Every key in schema order, one "key = value" line each; round-trips through apply_config_text.
std::string to_config_text(const RunConfig& cfg);
std::vector<std::string> config_keys();

/// Full cross-field validation; throws ConfigError.
void validate(const RunConfig& cfg);

/// Seed of scene `index` for a dataset generated with `seed`.
std::uint64_t scene_seed(std::uint64_t seed, Index index);

}  // namespace clude
