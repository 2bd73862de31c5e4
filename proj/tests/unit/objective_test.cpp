#include "clude/objective.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace clude;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "clude_objective_test";
  fs::create_directories(dir);
  return dir / name;
}

NdArray random_simplex(Index k, Index h, Index w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  NdArray a({k, h, w});
  for (Index p = 0; p < h * w; ++p) {
    double total = 0.0;
    for (Index i = 0; i < k; ++i) total += a[i * h * w + p] = u(rng);
    for (Index i = 0; i < k; ++i) a[i * h * w + p] /= total;
  }
  return a;
}

double entropy_sum(const NdArray& t, const Grid& omega) {
  const Index k = t.dim(0), hw = t.dim(1) * t.dim(2);
  double h = 0.0;
  for (Index p = 0; p < hw; ++p) {
    if (omega.data()[p] == 0.0) continue;
    for (Index i = 0; i < k; ++i) {
      const double v = t[i * hw + p];
      if (v > 0.0) h -= v * std::log(v);
    }
  }
  return h / omega.sum();
}

ModelConfig tiny_model(DepthRange range = {0.0, 10.0}, Index k = 4) {
  ModelConfig c;
  c.range = range;
  c.enc.pre_width = 2;
  c.enc.base_width = 4;
  c.enc.blocks = 1;
  c.enc.spp_bins = {1, 2};
  c.clu.k = k;
  c.clu.m = 8;
  c.clu.layers = 1;
  c.clu.head_width = 4;
  c.trans.tau = 0.25;
  return c;
}

std::vector<TrainSample> tiny_dataset(Index n, Index size, DepthRange range = {0.0, 10.0}) {
  SceneConfig sc;
  sc.height = sc.width = size;
  sc.range = range;
  sc.objects = 2;
  sc.density = 0.1;
  std::vector<TrainSample> d;
  for (Index i = 0; i < n; ++i) {
    const SceneSample s = synth_scene(sc, static_cast<std::uint64_t>(100 + i));
    d.push_back({s.sparse, s.rgb, s.gt});
  }
  return d;
}

std::vector<NdArray> snapshot(const CludeModel& m) {
  std::vector<NdArray> out;
  for (const Parameter* p : m.parameters().all()) out.push_back(p->value());
  return out;
}

}  // namespace

TEST(CeLoss, ExactOneHotIsZero) {
  NdArray t({3, 2, 2});
  for (Index p = 0; p < 4; ++p) t[(p % 3) * 4 + p] = 1.0;
  Graph g;
  Var l = g.constant(t);
  EXPECT_EQ(ce_loss(g, {l, l, l, l}, t, Grid::Ones(2, 2)).value()[0], 0.0);
}

TEST(CeLoss, SoftTargetGivesEntropyPerScale) {
  std::mt19937_64 rng(1);
  const NdArray t = random_simplex(5, 3, 3, rng);
  Grid omega = Grid::Ones(3, 3);
  omega(1, 2) = 0.0;
  Graph g;
  Var l = g.constant(t);
  EXPECT_NEAR(ce_loss(g, {l, l, l, l}, t, omega).value()[0], 4.0 * entropy_sum(t, omega), 1e-12);
}

TEST(CeLoss, UniformAgainstOneHotIsLogK) {
  const Index k = 32;
  NdArray t({k, 2, 2});
  for (Index p = 0; p < 4; ++p) t[7 * 4 + p] = 1.0;
  Graph g;
  Var u = g.constant(NdArray({k, 2, 2}, 1.0 / static_cast<double>(k)));
  const double v = ce_loss(g, {u, u, u, u}, t, Grid::Ones(2, 2)).value()[0];
  EXPECT_NEAR(v, 4.0 * std::log(32.0), 1e-9);
  EXPECT_NEAR(v, 13.8629, 1e-4);
}

TEST(CeLoss, GibbsInequalityOnRandomSoftTargets) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const NdArray target = random_simplex(6, 2, 3, rng);
    const Grid omega = Grid::Ones(2, 3);
    Graph g;
    std::vector<Var> ls;
    for (int s = 0; s < 4; ++s) ls.push_back(g.constant(random_simplex(6, 2, 3, rng)));
    ASSERT_GE(ce_loss(g, ls, target, omega).value()[0], 4.0 * entropy_sum(target, omega) - 1e-12);
  }
}

TEST(CeLoss, EmptyOmegaIsDataError) {
  Graph g;
  Var l = g.constant(NdArray({2, 2, 2}, 0.5));
  EXPECT_THROW(ce_loss(g, {l}, NdArray({2, 2, 2}, 0.5), Grid::Zero(2, 2)), DataError);
  EXPECT_THROW(mae_mse_loss(g, {g.constant(NdArray({1, 2, 2}))}, Grid::Zero(2, 2), Grid::Zero(2, 2)), DataError);
}

TEST(MaeMseLoss, ExactAndConstantError) {
  Grid gt(2, 2);
  gt << 1.0, 2.0, 3.0, 4.0;
  Graph g;
  NdArray d({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  std::vector<Var> same(5, g.constant(d));
  auto [a, b] = mae_mse_loss(g, same, gt, valid_mask(gt));
  EXPECT_EQ(a.value()[0], 0.0);
  EXPECT_EQ(b.value()[0], 0.0);

  const double e = 0.3;
  NdArray shifted = d;
  shifted.values() += e;
  std::vector<Var> off(5, g.constant(shifted));
  auto [a2, b2] = mae_mse_loss(g, off, gt, valid_mask(gt));
  EXPECT_NEAR(a2.value()[0], 5.0 * e, 1e-12);
  EXPECT_NEAR(b2.value()[0], 5.0 * e * e, 1e-12);
}

TEST(MaeMseLoss, MatchesDoubleLoopOnRandom4x4) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 20; ++t) {
    Grid gt(4, 4);
    for (Index i = 0; i < 16; ++i) gt.data()[i] = u(rng) < 2.0 ? 0.0 : u(rng);
    gt(0, 0) = 5.0;
    Graph g;
    std::vector<Var> ds;
    std::vector<NdArray> raw;
    for (int s = 0; s < 5; ++s) {
      NdArray d({1, 4, 4});
      for (Index i = 0; i < 16; ++i) d[i] = u(rng);
      raw.push_back(d);
      ds.push_back(g.constant(d));
    }
    double mae = 0.0, mse = 0.0;
    for (const NdArray& d : raw) {
      double sa = 0.0, sq = 0.0;
      int n = 0;
      for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 4; ++x) {
          if (gt(y, x) <= 0.0) continue;
          const double e = gt(y, x) - d.at(0, y, x);
          sa += std::abs(e);
          sq += e * e;
          ++n;
        }
      mae += sa / n;
      mse += sq / n;
    }
    auto [a, b] = mae_mse_loss(g, ds, gt, valid_mask(gt));
    ASSERT_NEAR(a.value()[0], mae, 1e-12);
    ASSERT_NEAR(b.value()[0], mse, 1e-12);
  }
}

TEST(TotalLoss, Weighting) {
  Graph g;
  LossParts p{g.constant(NdArray({1}, {2.0})), g.constant(NdArray({1}, {3.0})), g.constant(NdArray({1}, {5.0}))};
  EXPECT_DOUBLE_EQ(total_loss(p, {1.0, 1.0, 1.0}).value()[0], 10.0);
  EXPECT_DOUBLE_EQ(total_loss(p, {1.0, 1.0, 0.2}).value()[0], 6.0);
  EXPECT_DOUBLE_EQ(total_loss(p, {0.0, 1.0, 0.0}).value()[0], 3.0);
  EXPECT_THROW((LossWeights{0.0, 0.0, 0.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{-1.0, 1.0, 0.0}.validate()), ConfigError);
}

TEST(AdamW, SingleStepByHand) {
  Parameter p("p", NdArray({2}, {1.0, -2.0}));
  Parameter frozen("f", NdArray({1}, {4.0}));
  frozen.set_frozen(true);
  AdamW opt({&p, &frozen}, AdamWConfig{0.9, 0.999, 1e-8, 0.05});
  p.grad() = NdArray({2}, {0.5, -0.25});
  frozen.grad() = NdArray({1}, {1.0});
  opt.step(0.1);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * sign(g) (up to eps).
  EXPECT_NEAR(p.value()[0], 1.0 * (1.0 - 0.005) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value()[1], -2.0 * (1.0 - 0.005) + 0.1 * 0.25 / (0.25 + 1e-8), 1e-15);
  EXPECT_EQ(frozen.value()[0], 4.0);
}

TEST(Schedules, NonIncreasingAndStartAtPeak) {
  for (Index total : {1, 7, 60, 1000}) {
    EXPECT_DOUBLE_EQ(stage1_learning_rate(0, total, 1e-3), 1e-3);
    EXPECT_DOUBLE_EQ(stage2_learning_rate(0, total, 1e-3), 1e-3);
    for (Index s = 1; s < total; ++s) {
      ASSERT_LE(stage1_learning_rate(s, total, 1e-3), stage1_learning_rate(s - 1, total, 1e-3));
      ASSERT_LE(stage2_learning_rate(s, total, 1e-3), stage2_learning_rate(s - 1, total, 1e-3));
    }
  }
  EXPECT_DOUBLE_EQ(stage1_learning_rate(999, 1000, 5e-4), 1e-6);
  EXPECT_DOUBLE_EQ(stage2_learning_rate(999, 1000, 5e-4), 1e-5);
}

TEST(Trainer, NoStageTwoLeavesPruneBlockAtInitialisation) {
  CludeModel model(tiny_model(), 1);
  const auto before = snapshot(model);
  TrainConfig tc;
  tc.stage1_steps = 3;
  tc.stage2_steps = 0;
  Trainer tr(model, tc);
  tr.run(tiny_dataset(2, 16));
  const auto after = snapshot(model);
  const auto params = model.parameters().all();
  bool other_changed = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool same = (before[i].values() == after[i].values()).all();
    if (params[i]->name().starts_with("ptb.")) {
      EXPECT_TRUE(same) << params[i]->name();
    } else {
      other_changed |= !same;
    }
  }
  EXPECT_TRUE(other_changed);
}

TEST(Trainer, StageTwoChangesOnlyPruneBlock) {
  CludeModel model(tiny_model(), 2);
  TrainConfig tc;
  tc.stage1_steps = 2;
  tc.stage2_steps = 3;
  Trainer tr(model, tc);
  const auto data = tiny_dataset(2, 16);
  tr.step(data);
  tr.step(data);
  const auto before = snapshot(model);
  tr.run(data);
  const auto after = snapshot(model);
  const auto params = model.parameters().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool same = (before[i].values() == after[i].values()).all();
    EXPECT_EQ(same, !params[i]->name().starts_with("ptb.")) << params[i]->name();
  }
}

TEST(Trainer, FixedSeedGivesBitIdenticalLogs) {
  const auto data = tiny_dataset(3, 16);
  std::vector<std::vector<LossRecord>> logs;
  for (int run = 0; run < 2; ++run) {
    CludeModel model(tiny_model(), 3);
    TrainConfig tc;
    tc.stage1_steps = 4;
    tc.stage2_steps = 2;
    tc.seed = 9;
    Trainer tr(model, tc);
    tr.run(data);
    logs.push_back(tr.log());
  }
  ASSERT_EQ(logs[0].size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(logs[0][i].total, logs[1][i].total);
    EXPECT_EQ(logs[0][i].ce, logs[1][i].ce);
  }
}

TEST(Trainer, ResumeFromCheckpointReproducesNextStep) {
  const auto data = tiny_dataset(3, 16);
  TrainConfig tc;
  tc.stage1_steps = 4;
  tc.stage2_steps = 2;
  tc.seed = 4;

  CludeModel full(tiny_model(), 5);
  Trainer a(full, tc);
  a.run(data);

  CludeModel first(tiny_model(), 5);
  Trainer b(first, tc);
  for (int i = 0; i < 3; ++i) b.step(data);
  const auto path = temp_file("resume.ckpt");
  b.save_checkpoint(path, "preset=test\n");

  CludeModel resumed(tiny_model(), 77);  // different init, overwritten by the checkpoint
  Trainer c(resumed, tc);
  EXPECT_EQ(c.load_checkpoint(path), "preset=test\n");
  EXPECT_EQ(c.next_step(), 3);
  c.run(data);
  ASSERT_EQ(c.log().size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(c.log()[i].total, a.log()[i].total) << i;
  EXPECT_EQ(read_checkpoint_config(path), "preset=test\n");
}

TEST(Trainer, NonFiniteLossAbortsWithStepIndex) {
  CludeModel model(tiny_model(), 6);
  TrainConfig tc;
  tc.stage1_steps = 3;
  tc.stage2_steps = 0;
  Trainer tr(model, tc);
  auto data = tiny_dataset(1, 16);
  tr.step(data);
  model.head(0).final_bias().value()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    tr.step(data);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(Trainer, SingleSceneOverfits) {
  // Wide bins make the Laplace targets nearly one-hot, so the loss floor is low.
  const DepthRange range{0.0, 40.0};
  CludeModel model(tiny_model(range, 8), 7);
  TrainConfig tc;
  tc.stage1_steps = 200;
  tc.stage2_steps = 0;
  tc.lr = 3e-3;
  Trainer tr(model, tc);
  tr.run(tiny_dataset(1, 32, range));
  const double first = tr.log().front().total, last = tr.log().back().total;
  EXPECT_LE(last, first / 10.0) << first << " -> " << last;
}

TEST(Checkpoint, RejectsForeignAndMismatchedFiles) {
  const auto junk = temp_file("junk.ckpt");
  std::ofstream(junk) << "not a checkpoint";
  CludeModel model(tiny_model(), 8);
  EXPECT_THROW(load_model(junk, model), FormatError);
  EXPECT_THROW(load_model(temp_file("absent.ckpt"), model), IoError);
  const auto path = temp_file("model.ckpt");
  save_model(path, model, "k=4\n");
  CludeModel other(tiny_model({0.0, 10.0}, 6), 8);
  EXPECT_THROW(load_model(path, other), FormatError);
  CludeModel again(tiny_model(), 99);
  load_model(path, again);
  const auto a = snapshot(model), b = snapshot(again);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE((a[i].values() == b[i].values()).all());
}

TEST(LossCsv, HeaderAndRows) {
  const auto path = temp_file("loss.csv");
  write_loss_csv(path, {{0, 1.0, 2.0, 3.0, 6.0}, {1, 0.5, 1.0, 1.5, 3.0}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,L1,L2,L3,total");
  EXPECT_EQ(row, "0,1,2,3,6");
}
