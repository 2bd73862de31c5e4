#include "clude/evalkit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

using namespace clude;

namespace {

struct Reference {
  double mae = 0, rmse = 0, imae = 0, irmse = 0;
  Index n = 0;
};

Reference reference_metrics(const Grid& pred, const Grid& gt, const Mask* mask) {
  Reference r;
  double sa = 0, sq = 0, ia = 0, iq = 0;
  for (Index y = 0; y < gt.rows(); ++y)
    for (Index x = 0; x < gt.cols(); ++x) {
      if (!(gt(y, x) > 0.0) || (mask && !(*mask)(y, x))) continue;
      const double e = (pred(y, x) - gt(y, x)) * 1000.0;
      const double ie = (1.0 / pred(y, x) - 1.0 / gt(y, x)) * 1000.0;
      sa += std::abs(e);
      sq += e * e;
      ia += std::abs(ie);
      iq += ie * ie;
      ++r.n;
    }
  if (r.n == 0) return r;
  r.mae = sa / r.n;
  r.rmse = std::sqrt(sq / r.n);
  r.imae = ia / r.n;
  r.irmse = std::sqrt(iq / r.n);
  return r;
}

Mask reference_boundary(const LabelMap& l) {
  const Index h = l.rows(), w = l.cols();
  Mask seed = Mask::Constant(h, w, false), out = Mask::Constant(h, w, false);
  const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int d = 0; d < 4; ++d) {
        const Index yy = y + dy[d], xx = x + dx[d];
        if (yy >= 0 && yy < h && xx >= 0 && xx < w && l(yy, xx) != l(y, x)) seed(y, x) = true;
      }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index yy = std::max<Index>(0, y - 2); yy <= std::min(h - 1, y + 2); ++yy)
        for (Index xx = std::max<Index>(0, x - 2); xx <= std::min(w - 1, x + 2); ++xx)
          if (seed(yy, xx)) out(y, x) = true;
  return out;
}

void expect_report_near(const MetricReport& a, const Reference& b, double rel) {
  EXPECT_NEAR(a.mae, b.mae, rel * std::max(1.0, b.mae));
  EXPECT_NEAR(a.rmse, b.rmse, rel * std::max(1.0, b.rmse));
  EXPECT_NEAR(a.imae, b.imae, rel * std::max(1.0, b.imae));
  EXPECT_NEAR(a.irmse, b.irmse, rel * std::max(1.0, b.irmse));
  EXPECT_EQ(a.count, b.n);
}

struct RandomCase {
  Grid pred, gt;
  LabelMap labels;
};

RandomCase random_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 20.0), coin(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, 3);
  RandomCase c{Grid(16, 16), Grid(16, 16), LabelMap(16, 16)};
  for (Index i = 0; i < 256; ++i) {
    c.gt.data()[i] = coin(rng) < 0.2 ? 0.0 : u(rng);
    c.pred.data()[i] = u(rng);
  }
  // Blocky labels so both regions are populated.
  for (Index y = 0; y < 16; ++y)
    for (Index x = 0; x < 16; ++x) c.labels(y, x) = (y / 8) * 2 + (x / 8);
  if (lab(rng) == 0) c.labels(3, 3) = 7;
  return c;
}

}  // namespace

TEST(Metrics, IdenticalIsZero) {
  Grid gt(2, 2);
  gt << 1.0, 2.0, 0.0, 4.0;
  const MetricReport r = compute_metrics(gt.cwiseMax(0.5), gt);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.imae, 0.0);
  EXPECT_EQ(r.irmse, 0.0);
  EXPECT_EQ(r.count, 3);
}

TEST(Metrics, TwoPixelHandComputation) {
  Grid pred(1, 2), gt(1, 2);
  pred << 2.0, 4.0;
  gt << 1.0, 5.0;
  const MetricReport r = compute_metrics(pred, gt);
  EXPECT_NEAR(r.mae, 1000.0, 1e-9 * 1000.0);
  EXPECT_NEAR(r.rmse, 1000.0, 1e-9 * 1000.0);
  EXPECT_NEAR(r.imae, 275.0, 1e-9 * 275.0);
  EXPECT_NEAR(r.irmse, std::sqrt((0.25 + 0.0025) / 2.0) * 1000.0, 1e-9 * 355.0);
  EXPECT_NEAR(r.irmse, 355.32, 0.005);
}

TEST(Metrics, SinglePixel) {
  Grid pred = Grid::Constant(1, 1, 10.0), gt = Grid::Constant(1, 1, 11.0);
  const MetricReport r = compute_metrics(pred, gt);
  EXPECT_NEAR(r.mae, 1000.0, 1e-9);
  EXPECT_NEAR(r.rmse, 1000.0, 1e-9);
}

TEST(Metrics, ErrorsNameTheProblem) {
  EXPECT_THROW(compute_metrics(Grid::Ones(2, 2), Grid::Zero(2, 2)), DataError);
  Mask none = Mask::Constant(2, 2, false);
  EXPECT_THROW(compute_metrics(Grid::Ones(2, 2), Grid::Ones(2, 2), &none), DataError);
  Grid pred = Grid::Ones(3, 4);
  pred(1, 2) = 0.0;
  try {
    compute_metrics(pred, Grid::Ones(3, 4));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("y=1, x=2"), std::string::npos) << e.what();
  }
  // Nonpositive prediction at an unevaluated pixel is fine.
  Grid gt = Grid::Ones(3, 4);
  gt(1, 2) = 0.0;
  EXPECT_NO_THROW(compute_metrics(pred, gt));
}

TEST(Metrics, MatchesDoubleLoopOnRandom16x16) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const RandomCase c = random_case(s);
    expect_report_near(compute_metrics(c.pred, c.gt), reference_metrics(c.pred, c.gt, nullptr), 1e-12);
  }
}

TEST(Metrics, PowerMeanOrderingAndNonnegativity) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.1, 30.0);
  for (int t = 0; t < 500; ++t) {
    Grid p(4, 5), g(4, 5);
    for (Index i = 0; i < 20; ++i) {
      p.data()[i] = u(rng);
      g.data()[i] = u(rng);
    }
    const MetricReport r = compute_metrics(p, g);
    ASSERT_GE(r.mae, 0.0);
    ASSERT_GE(r.imae, 0.0);
    ASSERT_GE(r.rmse, r.mae * (1 - 1e-12));
    ASSERT_GE(r.irmse, r.imae * (1 - 1e-12));
  }
}

TEST(Metrics, PermutationAndPaddingInvariance) {
  const RandomCase c = random_case(77);
  const MetricReport base = compute_metrics(c.pred, c.gt);
  std::vector<Index> perm(256);
  for (Index i = 0; i < 256; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
  Grid p2(16, 16), g2(16, 16);
  for (Index i = 0; i < 256; ++i) {
    p2.data()[i] = c.pred.data()[perm[i]];
    g2.data()[i] = c.gt.data()[perm[i]];
  }
  const MetricReport shuffled = compute_metrics(p2, g2);
  EXPECT_NEAR(shuffled.mae, base.mae, 1e-9);
  EXPECT_NEAR(shuffled.irmse, base.irmse, 1e-9);

  Grid p3 = Grid::Constant(20, 24, 3.0), g3 = Grid::Zero(20, 24);
  p3.block(2, 5, 16, 16) = c.pred;
  g3.block(2, 5, 16, 16) = c.gt;
  const MetricReport padded = compute_metrics(p3, g3);
  EXPECT_NEAR(padded.mae, base.mae, 1e-9);
  EXPECT_NEAR(padded.rmse, base.rmse, 1e-9);
  EXPECT_EQ(padded.count, base.count);
}

TEST(BoundaryMask, ConstantLabelsGiveEmptyMask) {
  EXPECT_FALSE(boundary_mask(LabelMap::Constant(9, 7, 3)).any());
}

TEST(BoundaryMask, VerticalEdgeGivesBandAroundBothSides) {
  LabelMap l = LabelMap::Zero(10, 16);
  l.rightCols(8).setConstant(1);
  const Mask m = boundary_mask(l);
  for (Index y = 0; y < 10; ++y)
    for (Index x = 0; x < 16; ++x) ASSERT_EQ(m(y, x), x >= 5 && x <= 10) << y << "," << x;
}

TEST(BoundaryMask, CheckerboardIsAllTrue) {
  LabelMap l(6, 6);
  for (Index y = 0; y < 6; ++y)
    for (Index x = 0; x < 6; ++x) l(y, x) = (x + y) % 2;
  EXPECT_TRUE(boundary_mask(l).all());
}

TEST(SplitEval, MatchesDoubleLoopAndPartitions) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const RandomCase c = random_case(100 + s);
    const Mask m = boundary_mask(c.labels);
    ASSERT_TRUE((m == reference_boundary(c.labels)).all());
    const Mask inv = !m;
    const SplitReport r = split_eval(c.pred, c.gt, c.labels);
    ASSERT_TRUE(r.boundary && r.non_boundary);
    expect_report_near(*r.boundary, reference_metrics(c.pred, c.gt, &m), 1e-12);
    expect_report_near(*r.non_boundary, reference_metrics(c.pred, c.gt, &inv), 1e-12);
    EXPECT_EQ(r.boundary->count + r.non_boundary->count, compute_metrics(c.pred, c.gt).count);
  }
}

TEST(SplitEval, ConstantLabelsHaveNoBoundaryReport) {
  const SplitReport r = split_eval(Grid::Ones(4, 4), Grid::Constant(4, 4, 2.0), LabelMap::Zero(4, 4));
  EXPECT_FALSE(r.boundary.has_value());
  ASSERT_TRUE(r.non_boundary.has_value());
  EXPECT_NEAR(r.non_boundary->mae, 1000.0, 1e-9);
}

TEST(SplitEval, UniformErrorIsEqualInBothRegions) {
  LabelMap l = LabelMap::Zero(16, 16);
  l.rightCols(8).setConstant(1);
  const Grid gt = Grid::Constant(16, 16, 4.0);
  const SplitReport r = split_eval(gt + 0.5, gt, l);
  EXPECT_NEAR(r.boundary->mae, r.non_boundary->mae, 1e-9);
}

TEST(SplitEval, SmearedPredictionHurtsBoundaryMore) {
  LabelMap l = LabelMap::Zero(16, 32);
  l.rightCols(16).setConstant(1);
  Grid gt(16, 32), pred(16, 32);
  for (Index y = 0; y < 16; ++y)
    for (Index x = 0; x < 32; ++x) {
      gt(y, x) = x < 16 ? 2.0 : 8.0;
      // Linear ramp across the edge, exact elsewhere.
      const double t = std::clamp((static_cast<double>(x) - 12.5) / 7.0, 0.0, 1.0);
      pred(y, x) = 2.0 + 6.0 * t;
    }
  const SplitReport r = split_eval(pred, gt, l);
  EXPECT_GT(r.boundary->mae, r.non_boundary->mae);
}

TEST(IntervalMae, SingleBucketEqualsGlobal) {
  const RandomCase c = random_case(3);
  const auto rows = interval_mae(c.pred, c.gt, {0.0, 100.0});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(*rows[0].mae, compute_metrics(c.pred, c.gt).mae, 1e-9);
}

TEST(IntervalMae, ConstantSevenMetersPopulatesOneBucket) {
  const auto rows = interval_mae(Grid::Constant(3, 3, 7.5), Grid::Constant(3, 3, 7.0), uniform_edges(0.0, 90.0, 5.0));
  ASSERT_EQ(rows.size(), 18u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].mae.has_value(), i == 1) << i;
  }
  EXPECT_DOUBLE_EQ(rows[1].lo, 5.0);
  EXPECT_DOUBLE_EQ(rows[1].hi, 10.0);
  EXPECT_NEAR(*rows[1].mae, 500.0, 1e-9);
  EXPECT_EQ(rows[1].count, 9);
}

TEST(IntervalMae, RightClosedBuckets) {
  Grid gt(1, 2), pred(1, 2);
  gt << 5.0, 5.0000001;
  pred << 6.0, 7.0;
  const auto rows = interval_mae(pred, gt, {0.0, 5.0, 10.0});
  EXPECT_NEAR(*rows[0].mae, 1000.0, 1e-9);
  EXPECT_NEAR(*rows[1].mae, 1999.9999, 1e-3);
}

TEST(IntervalMae, MatchesDoubleLoopOnRandom16x16) {
  const std::vector<double> edges = uniform_edges(0.0, 20.0, 2.5);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const RandomCase c = random_case(200 + s);
    const auto rows = interval_mae(c.pred, c.gt, edges);
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      double acc = 0;
      Index n = 0;
      for (Index i = 0; i < 256; ++i) {
        const double g = c.gt.data()[i];
        if (g > edges[k] && g <= edges[k + 1]) {
          acc += std::abs(c.pred.data()[i] - g) * 1000.0;
          ++n;
        }
      }
      ASSERT_EQ(rows[k].count, n);
      if (n == 0) {
        EXPECT_FALSE(rows[k].mae.has_value());
      } else {
        EXPECT_NEAR(*rows[k].mae, acc / n, 1e-9);
      }
    }
  }
}

TEST(IntervalMae, UnsortedEdgesAreConfigError) {
  EXPECT_THROW(interval_mae(Grid::Ones(2, 2), Grid::Ones(2, 2), {0.0, 5.0, 5.0}), ConfigError);
  EXPECT_THROW(interval_mae(Grid::Ones(2, 2), Grid::Ones(2, 2), {10.0, 5.0}), ConfigError);
}

TEST(NearestValidFill, CopiesNearestSample) {
  SparseDepthMap s{Grid::Zero(1, 7)};
  s.depth(0, 0) = 1.0;
  s.depth(0, 6) = 7.0;
  const Grid f = nearest_valid_fill(s);
  EXPECT_EQ(f(0, 2), 1.0);
  EXPECT_EQ(f(0, 4), 7.0);
  EXPECT_EQ(f(0, 6), 7.0);
}

TEST(DensitySweep, FullDensityPassThroughIsExact) {
  SceneConfig sc;
  sc.height = sc.width = 16;
  std::vector<EvalScene> scenes;
  for (std::uint64_t i = 0; i < 3; ++i) {
    const SceneSample s = synth_scene(sc, i);
    scenes.push_back({s.rgb, s.gt, s.labels});
  }
  const Predictor pass = [](const SparseDepthMap& s, const RgbImage&) { return s.depth; };
  const auto rows = density_sweep(pass, scenes, {1.0}, 5);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].report.mae, 0.0);
  EXPECT_EQ(rows[0].report.rmse, 0.0);
  EXPECT_THROW(density_sweep(pass, scenes, {0.01, 0.05}, 5), ConfigError);
  EXPECT_THROW(density_sweep(pass, scenes, {1.5}, 5), ConfigError);
}

TEST(Reports, TableAndCsvShapes) {
  MetricReport r{200.5, 734.25, 1.5, 2.25, 10};
  EXPECT_EQ(metrics_csv_header(), "region,mae_mm,rmse_mm,imae_1_per_km,irmse_1_per_km,pixels\n");
  EXPECT_NE(metrics_csv_row("all", r).find("all,"), std::string::npos);
  const std::string t = format_metrics_table({{"Boundary", r}, {"Non-boundary", std::nullopt}});
  EXPECT_NE(t.find("Boundary"), std::string::npos);
  EXPECT_NE(t.find("Non-boundary"), std::string::npos);
  const auto rows = interval_mae(Grid::Constant(2, 2, 7.5), Grid::Constant(2, 2, 7.0), uniform_edges(0.0, 10.0, 5.0));
  EXPECT_NE(format_interval_table(rows).find("(5, 10]"), std::string::npos);
  EXPECT_NE(interval_csv(rows).find("5,10,500.000000,4"), std::string::npos);
}

TEST(Reports, ErrorMapPngIsWritten) {
  const auto path = std::filesystem::temp_directory_path() / "clude_evalkit_error.png";
  std::filesystem::remove(path);
  save_error_map_png(path, Grid::Constant(4, 4, 2.0), Grid::Constant(4, 4, 1.0), 1.0);
  EXPECT_GT(std::filesystem::file_size(path), 0u);
  const RgbImage img = load_rgb_png(path);
  EXPECT_NEAR(img.channels[0](0, 0), 1.0, 1e-12);
  EXPECT_NEAR(img.channels[2](0, 0), 0.0, 1e-12);
}
