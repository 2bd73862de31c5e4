#pragma once

// Evaluation: MAE/RMSE (mm), iMAE/iRMSE (1/km), boundary split, per-interval
// MAE, density sweeps and the nearest-valid-pixel baseline.

#include "clude/depthdata.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace clude {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MetricReport {
  double mae = 0.0;  ///< mm
  double rmse = 0.0;  ///< mm
  double imae = 0.0;  ///< 1/km
  double irmse = 0.0;  ///< 1/km
  Index count = 0;
};

/// Metrics over valid gt pixels (inside `mask` when given). Throws DataError
/// when no pixel qualifies or a prediction at an evaluated pixel is not positive.
MetricReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const Mask* mask = nullptr);

/// Per-metric mean of per-scene reports; counts are summed.
MetricReport mean_report(const std::vector<MetricReport>& reports);

/// Pixels with a differently labelled 4-neighbour, dilated by a 5x5 window.
Mask boundary_mask(const LabelMap& labels);

struct SplitReport {
  std::optional<MetricReport> boundary;
  std::optional<MetricReport> non_boundary;
};

SplitReport split_eval(const DepthMap& pred, const DepthMap& gt, const LabelMap& labels);

struct IntervalRow {
  double lo = 0.0, hi = 0.0;  ///< bucket (lo, hi], meters
  std::optional<double> mae;  ///< mm
  Index count = 0;
};

/// MAE per gt-depth bucket (edges[k], edges[k+1]]. Edges must be strictly increasing.
std::vector<IntervalRow> interval_mae(const DepthMap& pred, const DepthMap& gt, const std::vector<double>& edges);
/// lo, lo + width, ..., hi.
std::vector<double> uniform_edges(double lo, double hi, double width);

/// Dense fill where each pixel copies its nearest valid sparse pixel.
DepthMap nearest_valid_fill(const SparseDepthMap& sparse);

using Predictor = std::function<DepthMap(const SparseDepthMap&, const RgbImage&)>;

struct EvalScene {
  RgbImage rgb;
  DepthMap gt;
  LabelMap labels;
};

struct DensityRow {
  double density = 0.0;
  MetricReport report;
};

/// Re-sparsifies every gt at each density (seeded per scene) and evaluates.
/// Densities must lie in (0, 1] and be sorted descending.
std::vector<DensityRow> density_sweep(const Predictor& predict, const std::vector<EvalScene>& scenes,
                                      const std::vector<double>& densities, std::uint64_t seed);

// Reports.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MetricReport& r);
std::string format_metrics_table(const std::vector<std::pair<std::string, std::optional<MetricReport>>>& rows);
std::string format_interval_table(const std::vector<IntervalRow>& rows);
std::string interval_csv(const std::vector<IntervalRow>& rows);

/// 8-bit RGB rendering of pred - gt: red where too far, blue where too near,
/// black at zero error or invalid gt; saturates at `max_error` meters.
void save_error_map_png(const std::filesystem::path& path, const DepthMap& pred, const DepthMap& gt, double max_error);

}  // namespace clude
