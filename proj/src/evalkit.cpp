#include "clude/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace clude {

MetricReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const Mask* mask) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw DataError("compute_metrics: prediction and ground truth sizes differ");
  }
  if (mask != nullptr && (mask->rows() != gt.rows() || mask->cols() != gt.cols())) {
    throw DataError("compute_metrics: mask size differs from ground truth");
  }
  double abs_sum = 0.0, sq_sum = 0.0, iabs_sum = 0.0, isq_sum = 0.0;
  Index n = 0;
  for (Index y = 0; y < gt.rows(); ++y)
    for (Index x = 0; x < gt.cols(); ++x) {
      if (!(gt(y, x) > 0.0) || (mask != nullptr && !(*mask)(y, x))) continue;
      const double p = pred(y, x);
      if (!(p > 0.0)) {
        throw DataError("compute_metrics: nonpositive prediction " + std::to_string(p) + " at pixel (y=" +
                        std::to_string(y) + ", x=" + std::to_string(x) + ")");
      }
      const double e = 1000.0 * (p - gt(y, x));
      const double ie = 1000.0 * (1.0 / p - 1.0 / gt(y, x));
      abs_sum += std::abs(e);
      sq_sum += e * e;
      iabs_sum += std::abs(ie);
      isq_sum += ie * ie;
      ++n;
    }
  if (n == 0) throw DataError("compute_metrics: no valid ground-truth pixel to evaluate");
  const double dn = static_cast<double>(n);
  return {abs_sum / dn, std::sqrt(sq_sum / dn), iabs_sum / dn, std::sqrt(isq_sum / dn), n};
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw DataError("mean_report: no reports");
  MetricReport m;
  for (const MetricReport& r : reports) {
    m.mae += r.mae;
    m.rmse += r.rmse;
    m.imae += r.imae;
    m.irmse += r.irmse;
    m.count += r.count;
  }
  const double n = static_cast<double>(reports.size());
  m.mae /= n;
  m.rmse /= n;
  m.imae /= n;
  m.irmse /= n;
  return m;
}

Mask boundary_mask(const LabelMap& labels) {
  const Index h = labels.rows(), w = labels.cols();
  Mask seed = Mask::Constant(h, w, false);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const auto l = labels(y, x);
      seed(y, x) = (y > 0 && labels(y - 1, x) != l) || (y + 1 < h && labels(y + 1, x) != l) ||
                   (x > 0 && labels(y, x - 1) != l) || (x + 1 < w && labels(y, x + 1) != l);
    }
  Mask out = Mask::Constant(h, w, false);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (!seed(y, x)) continue;
      for (Index yy = std::max<Index>(0, y - 2); yy <= std::min(h - 1, y + 2); ++yy)
        for (Index xx = std::max<Index>(0, x - 2); xx <= std::min(w - 1, x + 2); ++xx) out(yy, xx) = true;
    }
  return out;
}

namespace {

std::optional<MetricReport> metrics_if_any(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
  if (!((gt > 0.0) && mask).any()) return std::nullopt;
  return compute_metrics(pred, gt, &mask);
}

}  // namespace

SplitReport split_eval(const DepthMap& pred, const DepthMap& gt, const LabelMap& labels) {
  if (labels.rows() != gt.rows() || labels.cols() != gt.cols()) {
    throw DataError("split_eval: label map size differs from ground truth");
  }
  const Mask b = boundary_mask(labels);
  const Mask nb = !b;
  return {metrics_if_any(pred, gt, b), metrics_if_any(pred, gt, nb)};
}

std::vector<IntervalRow> interval_mae(const DepthMap& pred, const DepthMap& gt, const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("interval_mae: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ConfigError("interval_mae: edges must be strictly increasing");
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw DataError("interval_mae: prediction and ground truth sizes differ");
  }
  std::vector<double> sums(edges.size() - 1, 0.0);
  std::vector<Index> counts(edges.size() - 1, 0);
  for (Index i = 0; i < gt.size(); ++i) {
    const double d = gt.data()[i];
    if (!(d > 0.0) || d <= edges.front() || d > edges.back()) continue;
    const auto it = std::lower_bound(edges.begin(), edges.end(), d);
    const auto b = static_cast<std::size_t>(it - edges.begin()) - 1;
    sums[b] += 1000.0 * std::abs(pred.data()[i] - d);
    ++counts[b];
  }
  std::vector<IntervalRow> rows;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    IntervalRow r{edges[b], edges[b + 1], std::nullopt, counts[b]};
    if (counts[b] > 0) r.mae = sums[b] / static_cast<double>(counts[b]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<double> uniform_edges(double lo, double hi, double width) {
  if (!(hi > lo) || !(width > 0.0)) throw ConfigError("uniform_edges: need hi > lo and width > 0");
  std::vector<double> e;
  const auto n = static_cast<long>(std::ceil((hi - lo) / width - 1e-9));
  for (long i = 0; i <= n; ++i) e.push_back(std::min(hi, lo + static_cast<double>(i) * width));
  return e;
}

DepthMap nearest_valid_fill(const SparseDepthMap& sparse) {
  const Grid& s = sparse.depth;
  std::vector<std::pair<Index, Index>> pts;
  for (Index y = 0; y < s.rows(); ++y)
    for (Index x = 0; x < s.cols(); ++x)
      if (s(y, x) > 0.0) pts.emplace_back(y, x);
  if (pts.empty()) throw DataError("nearest_valid_fill: sparse map has no valid pixel");
  DepthMap out(s.rows(), s.cols());
  for (Index y = 0; y < s.rows(); ++y)
    for (Index x = 0; x < s.cols(); ++x) {
      Index best = std::numeric_limits<Index>::max();
      double v = 0.0;
      for (const auto& [py, px] : pts) {
        const Index d = (py - y) * (py - y) + (px - x) * (px - x);
        if (d < best) {
          best = d;
          v = s(py, px);
        }
      }
      out(y, x) = v;
    }
  return out;
}

std::vector<DensityRow> density_sweep(const Predictor& predict, const std::vector<EvalScene>& scenes,
                                      const std::vector<double>& densities, std::uint64_t seed) {
  if (scenes.empty()) throw DataError("density_sweep: no scenes");
  for (std::size_t i = 0; i < densities.size(); ++i) {
    if (!(densities[i] > 0.0 && densities[i] <= 1.0)) throw ConfigError("density_sweep: densities must lie in (0, 1]");
    if (i > 0 && !(densities[i] < densities[i - 1])) {
      throw ConfigError("density_sweep: densities must be sorted descending");
    }
  }
  std::vector<DensityRow> rows;
  for (double density : densities) {
    std::vector<MetricReport> reports;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const SparseDepthMap sparse = sample_sparse(scenes[i].gt, density, seed + i);
      reports.push_back(compute_metrics(predict(sparse, scenes[i].rgb), scenes[i].gt));
    }
    rows.push_back({density, mean_report(reports)});
  }
  return rows;
}

std::string metrics_csv_header() { return "region,mae_mm,rmse_mm,imae_1_per_km,irmse_1_per_km,pixels\n"; }

std::string metrics_csv_row(const std::string& label, const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%lld\n", label.c_str(), r.mae, r.rmse, r.imae, r.irmse,
                static_cast<long long>(r.count));
  return buf;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, std::optional<MetricReport>>>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s %12s %12s %12s %12s %10s\n", "region", "MAE[mm]", "RMSE[mm]", "iMAE[1/km]",
                "iRMSE[1/km]", "pixels");
  os << buf;
  for (const auto& [label, r] : rows) {
    if (r) {
      std::snprintf(buf, sizeof(buf), "%-16s %12.2f %12.2f %12.2f %12.2f %10lld\n", label.c_str(), r->mae, r->rmse,
                    r->imae, r->irmse, static_cast<long long>(r->count));
    } else {
      std::snprintf(buf, sizeof(buf), "%-16s %12s %12s %12s %12s %10s\n", label.c_str(), "-", "-", "-", "-", "0");
    }
    os << buf;
  }
  return os.str();
}

std::string format_interval_table(const std::vector<IntervalRow>& rows) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-16s %12s %10s\n", "interval[m]", "MAE[mm]", "pixels");
  os << buf;
  for (const IntervalRow& r : rows) {
    char range[48];
    std::snprintf(range, sizeof(range), "(%g, %g]", r.lo, r.hi);
    if (r.mae) {
      std::snprintf(buf, sizeof(buf), "%-16s %12.2f %10lld\n", range, *r.mae, static_cast<long long>(r.count));
    } else {
      std::snprintf(buf, sizeof(buf), "%-16s %12s %10s\n", range, "-", "0");
    }
    os << buf;
  }
  return os.str();
}

std::string interval_csv(const std::vector<IntervalRow>& rows) {
  std::ostringstream os;
  os << "lo_m,hi_m,mae_mm,pixels\n";
  char buf[128];
  for (const IntervalRow& r : rows) {
    if (r.mae) {
      std::snprintf(buf, sizeof(buf), "%g,%g,%.6f,%lld\n", r.lo, r.hi, *r.mae, static_cast<long long>(r.count));
    } else {
      std::snprintf(buf, sizeof(buf), "%g,%g,,0\n", r.lo, r.hi);
    }
    os << buf;
  }
  return os.str();
}

void save_error_map_png(const std::filesystem::path& path, const DepthMap& pred, const DepthMap& gt,
                        double max_error) {
  if (!(max_error > 0.0)) throw ConfigError("error map: max_error must be positive");
  RgbImage img;
  for (auto& c : img.channels) c = Grid::Zero(gt.rows(), gt.cols());
  for (Index y = 0; y < gt.rows(); ++y)
    for (Index x = 0; x < gt.cols(); ++x) {
      if (!(gt(y, x) > 0.0)) continue;
      const double e = std::clamp((pred(y, x) - gt(y, x)) / max_error, -1.0, 1.0);
      if (e > 0.0) img.channels[0](y, x) = e;
      if (e < 0.0) img.channels[2](y, x) = -e;
    }
  save_rgb_png(path, img);
}

}  // namespace clude
