#pragma once

// On-disk synthetic datasets: PNG triplets plus a text manifest.

#include "clude/config.hpp"
#include "clude/depthdata.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace clude {

struct ManifestEntry {
  Index index = 0;
  std::uint64_t seed = 0;
  bool test = false;
  std::string gt, rgb, labels;  ///< paths relative to the manifest directory
};

struct Manifest {
  SceneConfig scene;  ///< sparse maps are re-derived from gt with these settings
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  ///< directory holding the manifest
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes cfg.data.scenes scenes and the manifest into `dir`.
Manifest write_dataset(const RunConfig& cfg, const std::filesystem::path& dir);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
/// Accepts a manifest file or the directory containing it; FormatError on bad content.
Manifest read_manifest(const std::filesystem::path& path);
SceneSample load_scene(const Manifest& m, const ManifestEntry& e);
std::vector<SceneSample> load_split(const Manifest& m, bool test);

}  // namespace clude
