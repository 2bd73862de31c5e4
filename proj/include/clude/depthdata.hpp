#pragma once

// Depth grids, PNG ingestion, the synthetic scene generator, sparse sampling,
// outlier injection and the min/max pooling pyramid.

#include "clude/errors.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace clude {

using Index = Eigen::Index;

/// H x W grid of reals, row-major (row = y).
using Grid = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelMap = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense depth in meters; 0 marks "no measurement".
using DepthMap = Grid;

struct DepthRange {
  double d_min = 0.0;
  double d_max = 10.0;
  double span() const { return d_max - d_min; }
};

struct SparseDepthMap {
  Grid depth;

  Index height() const { return depth.rows(); }
  Index width() const { return depth.cols(); }
  Index valid_count() const { return (depth > 0.0).count(); }
  double density() const { return static_cast<double>(valid_count()) / static_cast<double>(depth.size()); }
};

struct RgbImage {
  std::array<Grid, 3> channels;  ///< values in [0, 1]

  Index height() const { return channels[0].rows(); }
  Index width() const { return channels[0].cols(); }
};

struct SceneSample {
  RgbImage rgb;
  SparseDepthMap sparse;
  DepthMap gt;
  LabelMap labels;  ///< object ids; 0 is the background
};

struct SceneConfig {
  Index height = 64;
  Index width = 64;
  DepthRange range;
  int objects = 3;
  double density = 0.05;
  double outlier_rate = 0.0;
};

/// Max/min pooled sparse maps at 1/4 and 1/2 scale plus the original map.
struct SparsePyramid {
  Grid quarter_max, quarter_min;
  Grid half_max, half_min;
  Grid full;
};

struct PixelPos {
  Index y, x;
  bool operator==(const PixelPos&) const = default;
  auto operator<=>(const PixelPos&) const = default;
};

struct OutlierInjection {
  SparseDepthMap sparse;
  std::vector<PixelPos> positions;
};

// PNG files. Depth: 16-bit single channel, meters = raw / 256, raw 0 invalid.
SparseDepthMap load_depth_png(const std::filesystem::path& path);
void save_depth_png(const std::filesystem::path& path, const Grid& depth);
RgbImage load_rgb_png(const std::filesystem::path& path);
void save_rgb_png(const std::filesystem::path& path, const RgbImage& rgb);
LabelMap load_label_png(const std::filesystem::path& path);
void save_label_png(const std::filesystem::path& path, const LabelMap& labels);

/// Sets values outside [d_min, d_max] to 0 (invalid).
Grid mask_to_range(const Grid& depth, const DepthRange& range);

/// Piecewise-constant scene: constant background, far-to-near painted objects
/// with pairwise distinct depths, shaded label colors plus noise.
SceneSample synth_scene(const SceneConfig& config, std::uint64_t seed);
/// The sparse map synth_scene derives from gt and labels for `seed`.
SparseDepthMap scene_sparse(const DepthMap& gt, const LabelMap& labels, const SceneConfig& config, std::uint64_t seed);

/// Exactly floor(density * H * W) pixels of gt's valid support, uniformly without replacement.
SparseDepthMap sample_sparse(const DepthMap& gt, double density, std::uint64_t seed);

/// Replaces a fraction `rate` of the valid sparse pixels lying within 2 px of a
/// label change by the gt depth of the nearest differently-labelled pixel.
OutlierInjection inject_outliers(const SparseDepthMap& sparse, const DepthMap& gt, const LabelMap& labels, double rate,
                                 std::uint64_t seed);

/// Pooling that ignores zeros; an empty window yields 0 in both channels.
SparsePyramid pool_pyramid(const SparseDepthMap& sparse);

/// (max, min) over valid entries of each factor x factor window.
std::pair<Grid, Grid> minmax_pool(const Grid& sparse, Index factor);

}  // namespace clude
