#include "clude/depthdata.hpp"

#include "png_io.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace clude {
namespace {

constexpr double kRawScale = 256.0;

detail::PngImage gray16(const Grid& g, auto to_raw) {
  detail::PngImage img;
  img.width = static_cast<std::size_t>(g.cols());
  img.height = static_cast<std::size_t>(g.rows());
  img.channels = 1;
  img.bit_depth = 16;
  img.samples.resize(img.width * img.height);
  for (Index i = 0; i < g.size(); ++i) img.samples[static_cast<std::size_t>(i)] = to_raw(g.data()[i]);
  return img;
}

void require_gray16(const detail::PngImage& img, const std::filesystem::path& path) {
  if (img.channels != 1) {
    throw FormatError(path.string() + ": expected a single-channel PNG, found " + std::to_string(img.channels) +
                      " channels");
  }
  if (img.bit_depth != 16) {
    throw FormatError(path.string() + ": expected a 16-bit PNG, found bit depth " + std::to_string(img.bit_depth));
  }
}

bool near_label_change(const LabelMap& labels, Index y, Index x, Index radius) {
  const std::int32_t l = labels(y, x);
  for (Index dy = -radius; dy <= radius; ++dy)
    for (Index dx = -radius; dx <= radius; ++dx) {
      const Index yy = y + dy, xx = x + dx;
      if (yy < 0 || xx < 0 || yy >= labels.rows() || xx >= labels.cols()) continue;
      if (labels(yy, xx) != l) return true;
    }
  return false;
}

}  // namespace

SparseDepthMap load_depth_png(const std::filesystem::path& path) {
  const detail::PngImage img = detail::read_png(path);
  require_gray16(img, path);
  SparseDepthMap out{Grid(static_cast<Index>(img.height), static_cast<Index>(img.width))};
  for (Index i = 0; i < out.depth.size(); ++i) {
    out.depth.data()[i] = static_cast<double>(img.samples[static_cast<std::size_t>(i)]) / kRawScale;
  }
  return out;
}

void save_depth_png(const std::filesystem::path& path, const Grid& depth) {
  detail::write_png(path, gray16(depth, [](double d) {
                      const double raw = std::round(std::max(d, 0.0) * kRawScale);
                      return static_cast<std::uint16_t>(std::min(raw, 65535.0));
                    }));
}

RgbImage load_rgb_png(const std::filesystem::path& path) {
  const detail::PngImage img = detail::read_png(path);
  if (img.channels != 3) {
    throw FormatError(path.string() + ": expected a 3-channel RGB PNG, found " + std::to_string(img.channels) +
                      " channels");
  }
  const double maxv = img.bit_depth == 16 ? 65535.0 : 255.0;
  RgbImage rgb;
  for (auto& c : rgb.channels) c.resize(static_cast<Index>(img.height), static_cast<Index>(img.width));
  const Index n = rgb.channels[0].size();
  for (Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      rgb.channels[static_cast<std::size_t>(c)].data()[i] = img.samples[static_cast<std::size_t>(i * 3 + c)] / maxv;
  return rgb;
}

void save_rgb_png(const std::filesystem::path& path, const RgbImage& rgb) {
  detail::PngImage img;
  img.width = static_cast<std::size_t>(rgb.width());
  img.height = static_cast<std::size_t>(rgb.height());
  img.channels = 3;
  img.bit_depth = 8;
  const Index n = rgb.channels[0].size();
  img.samples.resize(static_cast<std::size_t>(n * 3));
  for (Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(rgb.channels[static_cast<std::size_t>(c)].data()[i], 0.0, 1.0);
      img.samples[static_cast<std::size_t>(i * 3 + c)] = static_cast<std::uint16_t>(std::lround(v * 255.0));
    }
  detail::write_png(path, img);
}

LabelMap load_label_png(const std::filesystem::path& path) {
  const detail::PngImage img = detail::read_png(path);
  require_gray16(img, path);
  LabelMap labels(static_cast<Index>(img.height), static_cast<Index>(img.width));
  for (Index i = 0; i < labels.size(); ++i) labels.data()[i] = img.samples[static_cast<std::size_t>(i)];
  return labels;
}

void save_label_png(const std::filesystem::path& path, const LabelMap& labels) {
  detail::write_png(path, gray16(labels.cast<double>(), [](double v) {
                      return static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
                    }));
}

Grid mask_to_range(const Grid& depth, const DepthRange& range) {
  return (depth >= range.d_min && depth <= range.d_max && depth > 0.0).select(depth, 0.0);
}

SceneSample synth_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.height <= 0 || cfg.width <= 0 || cfg.height % 8 != 0 || cfg.width % 8 != 0) {
    throw ConfigError("synth_scene: height and width must be positive multiples of 8, got " +
                      std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  if (cfg.objects < 0 || cfg.objects > 12) throw ConfigError("synth_scene: object count must lie in [0, 12]");
  if (!(cfg.range.d_max > cfg.range.d_min) || cfg.range.d_min < 0.0) {
    throw ConfigError("synth_scene: invalid depth range");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lo = std::max(cfg.range.d_min, 1e-3), span = cfg.range.d_max - lo;
  const Index h = cfg.height, w = cfg.width;

  // Depths are snapped to the PNG quantum so scenes survive a file round trip.
  auto quantize = [](double d) { return std::round(d * kRawScale) / kRawScale; };
  // Background in the far band, objects strictly nearer with pairwise gaps.
  const double background = quantize(lo + span * (0.75 + 0.2 * unit(rng)));
  const double min_gap = 0.04 * span;
  std::vector<double> depths;
  while (static_cast<int>(depths.size()) < cfg.objects) {
    const double d = quantize(lo + span * (0.05 + 0.6 * unit(rng)));
    const bool clear = std::all_of(depths.begin(), depths.end(), [&](double o) { return std::abs(o - d) >= min_gap; });
    if (clear) depths.push_back(d);
  }
  // Painting far-to-near keeps occlusion physically ordered.
  std::vector<int> order(depths.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return depths[static_cast<std::size_t>(a)] > depths[static_cast<std::size_t>(b)]; });

  SceneSample s;
  s.labels = LabelMap::Zero(h, w);
  s.gt = DepthMap::Constant(h, w, background);
  std::vector<double> label_depth{background};
  label_depth.insert(label_depth.end(), depths.begin(), depths.end());

  struct Shape2d {
    bool ellipse;
    double cy, cx, ry, rx;
  };
  std::vector<Shape2d> shapes;
  for (int i = 0; i < cfg.objects; ++i) {
    Shape2d sh;
    sh.ellipse = unit(rng) < 0.5;
    sh.cy = unit(rng) * static_cast<double>(h);
    sh.cx = unit(rng) * static_cast<double>(w);
    sh.ry = static_cast<double>(h) * (0.08 + 0.17 * unit(rng));
    sh.rx = static_cast<double>(w) * (0.08 + 0.17 * unit(rng));
    shapes.push_back(sh);
  }
  for (int idx : order) {
    const auto& sh = shapes[static_cast<std::size_t>(idx)];
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const double dy = (static_cast<double>(y) + 0.5 - sh.cy) / sh.ry;
        const double dx = (static_cast<double>(x) + 0.5 - sh.cx) / sh.rx;
        const bool inside = sh.ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) {
          s.labels(y, x) = idx + 1;
          s.gt(y, x) = label_depth[static_cast<std::size_t>(idx + 1)];
        }
      }
  }

  // Shaded flat colors per label with a vertical illumination ramp and noise.
  std::vector<std::array<double, 3>> colors(label_depth.size());
  for (auto& c : colors)
    for (double& v : c) v = 0.15 + 0.7 * unit(rng);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (auto& c : s.rgb.channels) c.resize(h, w);
  for (Index y = 0; y < h; ++y) {
    const double shade = 0.85 + 0.15 * static_cast<double>(y) / static_cast<double>(h);
    for (Index x = 0; x < w; ++x) {
      const auto& col = colors[static_cast<std::size_t>(s.labels(y, x))];
      for (std::size_t c = 0; c < 3; ++c) {
        s.rgb.channels[c](y, x) = std::round(std::clamp(col[c] * shade + noise(rng), 0.0, 1.0) * 255.0) / 255.0;
      }
    }
  }

  s.sparse = scene_sparse(s.gt, s.labels, cfg, seed);
  return s;
}

SparseDepthMap scene_sparse(const DepthMap& gt, const LabelMap& labels, const SceneConfig& cfg, std::uint64_t seed) {
  const std::uint64_t sparse_seed = seed ^ 0x9E3779B97F4A7C15ULL;
  SparseDepthMap sparse = sample_sparse(gt, cfg.density, sparse_seed);
  if (cfg.outlier_rate > 0.0) sparse = inject_outliers(sparse, gt, labels, cfg.outlier_rate, sparse_seed + 1).sparse;
  return sparse;
}

SparseDepthMap sample_sparse(const DepthMap& gt, double density, std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0)) {
    throw ConfigError("sample_sparse: density must lie in (0, 1], got " + std::to_string(density));
  }
  const auto count = static_cast<Index>(std::floor(density * static_cast<double>(gt.size())));
  std::vector<Index> support;
  for (Index i = 0; i < gt.size(); ++i)
    if (gt.data()[i] > 0.0) support.push_back(i);
  if (count > static_cast<Index>(support.size())) {
    throw DataError("sample_sparse: " + std::to_string(count) + " samples requested but gt has only " +
                    std::to_string(support.size()) + " valid pixels");
  }
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  std::sample(support.begin(), support.end(), std::back_inserter(chosen), count, rng);
  SparseDepthMap out{Grid::Zero(gt.rows(), gt.cols())};
  for (Index i : chosen) out.depth.data()[i] = gt.data()[i];
  return out;
}

OutlierInjection inject_outliers(const SparseDepthMap& sparse, const DepthMap& gt, const LabelMap& labels, double rate,
                                 std::uint64_t seed) {
  if (labels.rows() != sparse.height() || labels.cols() != sparse.width() || gt.rows() != sparse.height() ||
      gt.cols() != sparse.width()) {
    throw ContractViolation("inject_outliers: labels, gt and sparse maps are not aligned");
  }
  constexpr Index kRadius = 2;
  OutlierInjection out{sparse, {}};
  if (rate <= 0.0) return out;

  std::vector<PixelPos> candidates;
  for (Index y = 0; y < sparse.height(); ++y)
    for (Index x = 0; x < sparse.width(); ++x)
      if (sparse.depth(y, x) > 0.0 && near_label_change(labels, y, x, kRadius)) candidates.push_back({y, x});
  const auto count = static_cast<Index>(std::floor(std::min(rate, 1.0) * static_cast<double>(candidates.size())));
  std::mt19937_64 rng(seed);
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(out.positions), count, rng);

  for (const PixelPos& p : out.positions) {
    // Nearest differently-labelled pixel; scan order breaks distance ties.
    Index best = std::numeric_limits<Index>::max();
    PixelPos src = p;
    for (Index dy = -kRadius; dy <= kRadius; ++dy)
      for (Index dx = -kRadius; dx <= kRadius; ++dx) {
        const Index yy = p.y + dy, xx = p.x + dx;
        if (yy < 0 || xx < 0 || yy >= labels.rows() || xx >= labels.cols()) continue;
        if (labels(yy, xx) == labels(p.y, p.x)) continue;
        const Index d2 = dy * dy + dx * dx;
        if (d2 < best) {
          best = d2;
          src = {yy, xx};
        }
      }
    out.sparse.depth(p.y, p.x) = gt(src.y, src.x);
  }
  return out;
}

std::pair<Grid, Grid> minmax_pool(const Grid& sparse, Index factor) {
  const Index oh = sparse.rows() / factor, ow = sparse.cols() / factor;
  Grid mx = Grid::Zero(oh, ow), mn = Grid::Zero(oh, ow);
  for (Index oy = 0; oy < oh; ++oy)
    for (Index ox = 0; ox < ow; ++ox) {
      double hi = 0.0, low = std::numeric_limits<double>::infinity();
      for (Index y = oy * factor; y < (oy + 1) * factor; ++y)
        for (Index x = ox * factor; x < (ox + 1) * factor; ++x) {
          const double v = sparse(y, x);
          if (v <= 0.0) continue;
          hi = std::max(hi, v);
          low = std::min(low, v);
        }
      if (hi > 0.0) {
        mx(oy, ox) = hi;
        mn(oy, ox) = low;
      }
    }
  return {mx, mn};
}

SparsePyramid pool_pyramid(const SparseDepthMap& sparse) {
  if (sparse.height() % 4 != 0 || sparse.width() % 4 != 0) {
    throw ContractViolation("pool_pyramid: dimensions must be divisible by 4");
  }
  SparsePyramid p;
  std::tie(p.quarter_max, p.quarter_min) = minmax_pool(sparse.depth, 4);
  std::tie(p.half_max, p.half_min) = minmax_pool(sparse.depth, 2);
  p.full = sparse.depth;
  return p;
}

}  // namespace clude
