#include "clude/cluster.hpp"
#include "clude/gradcheck.hpp"
#include "clude/guidance.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace clude;

namespace {

NdArray random_array(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  NdArray a(std::move(shape));
  for (Index i = 0; i < a.size(); ++i) a[i] = u(rng);
  return a;
}

ClusterConfig small_config(Index k, Index m, Index layers) {
  ClusterConfig c;
  c.k = k;
  c.m = m;
  c.layers = layers;
  c.heads = 1;
  c.head_width = 4;
  return c;
}

void set_identity(Parameter& p) {
  const Index n = p.value().dim(0);
  p.value().values().setZero();
  for (Index i = 0; i < n; ++i) p.value().at(i, i) = 1.0;
}

}  // namespace

TEST(Tokenize, OneTokenPerPoint) {
  ParameterSet ps;
  std::mt19937_64 rng(1);
  ClusteringTransformer ct(ps, "clu", small_config(4, 8, 1), 6, rng);
  Graph g;
  const Tokens t = ct.tokenize(g, g.constant(random_array({6, 8, 8}, rng)));
  EXPECT_EQ(t.t.dim(0), 64);
  EXPECT_EQ(t.t.dim(1), 8);
  EXPECT_EQ(t.h, 8);
  EXPECT_EQ(t.w, 8);
  EXPECT_THROW(ct.tokenize(g, g.constant(random_array({5, 8, 8}, rng))), ContractViolation);
}

TEST(Tokenize, PositionEmbeddingSeparatesIdenticalFeatures) {
  ParameterSet ps;
  std::mt19937_64 rng(2);
  ClusteringTransformer ct(ps, "clu", small_config(4, 8, 0), 3, rng);
  Graph g;
  const Tokens t = ct.tokenize(g, g.constant(NdArray({3, 4, 4}, 0.7)));
  const auto& m = t.t.value();
  for (Index a = 0; a < 16; ++a)
    for (Index b = a + 1; b < 16; ++b) {
      double diff = 0.0;
      for (Index j = 0; j < 8; ++j) diff = std::max(diff, std::abs(m.at(a, j) - m.at(b, j)));
      ASSERT_GT(diff, 1e-3) << a << " vs " << b;
    }
}

TEST(Tokenize, ZeroProjectionLeavesPositionEmbedding) {
  ParameterSet ps;
  std::mt19937_64 rng(3);
  ClusteringTransformer ct(ps, "clu", small_config(4, 8, 0), 3, rng);
  for (Parameter* p : ps.with_prefix("clu.proj")) p->value().values().setZero();
  Graph g;
  const Tokens t = ct.tokenize(g, g.constant(random_array({3, 2, 4}, rng)));
  const NdArray pe = fourier_position_embedding(2, 4, 8);
  EXPECT_EQ(t.t.value().values().matrix(), pe.values().matrix());
}

TEST(Propagate, ZeroLayersIsIdentity) {
  ParameterSet ps;
  std::mt19937_64 rng(4);
  ClusteringTransformer ct(ps, "clu", small_config(3, 8, 0), 3, rng);
  Graph g;
  Var c = g.constant(random_array({3, 8}, rng)), t = g.constant(random_array({10, 8}, rng));
  auto [ch, th] = ct.propagate(g, c, t);
  EXPECT_EQ(ch.value().values().matrix(), c.value().values().matrix());
  EXPECT_EQ(th.value().values().matrix(), t.value().values().matrix());
}

TEST(Propagate, SequenceLengthPreserved) {
  ParameterSet ps;
  std::mt19937_64 rng(5);
  ClusterConfig cfg = small_config(3, 8, 2);
  cfg.heads = 2;
  ClusteringTransformer ct(ps, "clu", cfg, 3, rng);
  Graph g;
  auto [ch, th] = ct.propagate(g, g.constant(random_array({3, 8}, rng)), g.constant(random_array({10, 8}, rng)));
  EXPECT_EQ(ch.shape(), (Shape{3, 8}));
  EXPECT_EQ(th.shape(), (Shape{10, 8}));
}

TEST(Propagate, GradientToCenters) {
  ParameterSet ps;
  std::mt19937_64 rng(6);
  ClusterConfig cfg = small_config(3, 8, 2);
  cfg.heads = 2;
  ClusteringTransformer ct(ps, "clu", cfg, 3, rng);
  const NdArray tokens = random_array({6, 8}, rng), probe = random_array({3, 8}, rng);
  auto loss = [&](Graph& g) {
    auto [ch, th] = ct.propagate(g, ct.centers(g), g.constant(tokens));
    return sum(ch * g.constant(probe));
  };
  Parameter* centers = &ct.center_parameter();
  EXPECT_LE(check_parameter_gradients(loss, std::span<Parameter* const>(&centers, 1), 1e-5).max_rel_error, 1e-6);
}

TEST(Group, EqualDotProductsGiveHalfHalf) {
  ParameterSet ps;
  std::mt19937_64 rng(7);
  ClusteringTransformer ct(ps, "clu", small_config(2, 2, 0), 3, rng);
  set_identity(ct.wq());
  set_identity(ct.wk());
  Graph g;
  Var a = ct.group(g, g.constant(NdArray({2, 2}, {1.0, 0.0, 0.0, 1.0})), g.constant(NdArray({1, 2}, {2.0, 2.0})));
  EXPECT_DOUBLE_EQ(a.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(a.value()[1], 0.5);
}

TEST(Group, LargeMarginSaturates) {
  ParameterSet ps;
  std::mt19937_64 rng(8);
  ClusteringTransformer ct(ps, "clu", small_config(2, 1, 0), 3, rng);
  set_identity(ct.wq());
  set_identity(ct.wk());
  Graph g;
  Var a = ct.group(g, g.constant(NdArray({2, 1}, {50.0, 0.0})), g.constant(NdArray({1, 1}, {1.0})));
  EXPECT_LT(std::abs(a.value()[0] - 1.0), 1e-20);
  EXPECT_LT(a.value()[1], 1e-20);
}

TEST(Group, MatchesBruteForceInOracleConfiguration) {
  ParameterSet ps;
  std::mt19937_64 rng(9);
  const Index k = 5, m = 6, n = 7;
  ClusteringTransformer ct(ps, "clu", small_config(k, m, 0), 3, rng);
  set_identity(ct.wq());
  set_identity(ct.wk());
  const NdArray c = random_array({k, m}, rng, 2.0), t = random_array({n, m}, rng, 2.0);
  Graph g;
  const NdArray a = ct.group(g, g.constant(c), g.constant(t)).value();
  for (Index j = 0; j < n; ++j) {
    std::vector<double> logits(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      double dot = 0.0;
      for (Index d = 0; d < m; ++d) dot += c.at(i, d) * t.at(j, d);
      logits[static_cast<std::size_t>(i)] = dot;
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    for (Index i = 0; i < k; ++i) EXPECT_NEAR(a.at(i, j), std::exp(logits[static_cast<std::size_t>(i)]) / z, 1e-14);
  }
}

TEST(Group, ColumnsSumToOneOver1000Cases) {
  ParameterSet ps;
  std::mt19937_64 rng(10);
  ClusteringTransformer ct(ps, "clu", small_config(6, 8, 0), 3, rng);
  for (int t = 0; t < 1000; ++t) {
    Graph g;
    const NdArray a = ct.group(g, g.constant(random_array({6, 8}, rng, 3.0)), g.constant(random_array({5, 8}, rng, 3.0))).value();
    for (Index j = 0; j < 5; ++j) {
      double s = 0.0;
      for (Index i = 0; i < 6; ++i) {
        ASSERT_GE(a.at(i, j), 0.0);
        ASSERT_LE(a.at(i, j), 1.0);
        s += a.at(i, j);
      }
      ASSERT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Group, PermutingCentersPermutesRows) {
  ParameterSet ps;
  std::mt19937_64 rng(11);
  ClusteringTransformer ct(ps, "clu", small_config(4, 5, 0), 3, rng);
  const NdArray c = random_array({4, 5}, rng), t = random_array({6, 5}, rng);
  const std::vector<Index> perm{2, 0, 3, 1};
  NdArray cp({4, 5});
  for (Index i = 0; i < 4; ++i)
    for (Index d = 0; d < 5; ++d) cp.at(i, d) = c.at(perm[static_cast<std::size_t>(i)], d);
  Graph g;
  const NdArray a = ct.group(g, g.constant(c), g.constant(t)).value();
  const NdArray ap = ct.group(g, g.constant(cp), g.constant(t)).value();
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(ap.at(i, j), a.at(perm[static_cast<std::size_t>(i)], j));
}

TEST(UpdateCenters, OneHotRowPicksFirstToken) {
  ParameterSet ps;
  std::mt19937_64 rng(12);
  ClusteringTransformer ct(ps, "clu", small_config(3, 4, 0), 3, rng);
  const NdArray t = random_array({5, 4}, rng);
  NdArray a({3, 5});
  a.at(0, 0) = 1.0;
  Graph g;
  const NdArray c = ct.update_centers(g, g.constant(a), g.constant(t)).value();
  const NdArray& wv = ct.wv().value();
  for (Index d = 0; d < 4; ++d) {
    double expect = 0.0;
    for (Index e = 0; e < 4; ++e) expect += t.at(0, e) * wv.at(e, d);
    EXPECT_NEAR(c.at(0, d), expect, 1e-15);
    EXPECT_EQ(c.at(1, d), 0.0);
  }
}

TEST(UpdateCenters, UniformAssignmentIsScaledSum) {
  ParameterSet ps;
  std::mt19937_64 rng(13);
  const Index k = 4, n = 6, m = 3;
  ClusteringTransformer ct(ps, "clu", small_config(k, m, 0), 3, rng);
  const NdArray t = random_array({n, m}, rng);
  Graph g;
  const NdArray c = ct.update_centers(g, g.constant(NdArray({k, n}, 1.0 / static_cast<double>(k))), g.constant(t)).value();
  const NdArray& wv = ct.wv().value();
  for (Index i = 0; i < k; ++i)
    for (Index d = 0; d < m; ++d) {
      double expect = 0.0;
      for (Index j = 0; j < n; ++j)
        for (Index e = 0; e < m; ++e) expect += t.at(j, e) * wv.at(e, d) / static_cast<double>(k);
      EXPECT_NEAR(c.at(i, d), expect, 1e-14);
    }
  const NdArray z = ct.update_centers(g, g.constant(NdArray({k, n}, 0.25)), g.constant(NdArray({n, m}))).value();
  EXPECT_EQ(z.values().abs().maxCoeff(), 0.0);
}

TEST(Reconstruct, ShapeAndZeroMlp) {
  ParameterSet ps;
  std::mt19937_64 rng(14);
  ClusteringTransformer ct(ps, "clu", small_config(3, 4, 1), 5, rng);
  Graph g;
  Var f1 = g.constant(random_array({5, 2, 3}, rng));
  const Tokens t = ct.tokenize(g, f1);
  Var a = ct.group(g, ct.centers(g), t.t);
  Var c = ct.update_centers(g, a, t.t);
  Var r = ct.reconstruct(g, a, c, t);
  EXPECT_EQ(r.shape(), (Shape{4, 2, 3}));

  ct.mlp_out().value().values().setZero();
  ct.mlp_out_bias().value().values().setZero();
  Var r0 = ct.reconstruct(g, a, c, t);
  for (Index ch = 0; ch < 4; ++ch)
    for (Index y = 0; y < 2; ++y)
      for (Index x = 0; x < 3; ++x) EXPECT_EQ(r0.value().at(ch, y, x), t.t.value().at(y * 3 + x, ch));
}

TEST(Reconstruct, GradientToCentersThroughFullChain) {
  ParameterSet ps;
  std::mt19937_64 rng(15);
  ClusteringTransformer ct(ps, "clu", small_config(3, 8, 1), 4, rng);
  const NdArray f1 = random_array({4, 2, 2}, rng), probe = random_array({8, 2, 2}, rng);
  auto loss = [&](Graph& g) { return sum(ct(g, g.constant(f1)).feature * g.constant(probe)); };
  Parameter* centers = &ct.center_parameter();
  EXPECT_LE(check_parameter_gradients(loss, std::span<Parameter* const>(&centers, 1), 1e-5).max_rel_error, 1e-6);
  // Every other parameter of the block as well.
  EXPECT_LE(check_parameter_gradients(loss, ps.all(), 1e-5, 6, 3).max_rel_error, 1e-5);
}

TEST(ClusterInvariants, CenterPermutationLeavesFeatureUnchanged) {
  ParameterSet ps;
  std::mt19937_64 rng(16);
  ClusteringTransformer ct(ps, "clu", small_config(4, 8, 2), 4, rng);
  const NdArray f1 = random_array({4, 2, 4}, rng);
  Graph g;
  const auto before = ct(g, g.constant(f1));
  const NdArray a = before.similarity.value(), feat = before.feature.value();

  NdArray& c = ct.center_parameter().value();  // [M, K]
  const NdArray orig = c;
  const std::vector<Index> perm{3, 1, 0, 2};
  for (Index d = 0; d < 8; ++d)
    for (Index i = 0; i < 4; ++i) c.at(d, i) = orig.at(d, perm[static_cast<std::size_t>(i)]);
  Graph g2;
  const auto after = ct(g2, g2.constant(f1));
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 8; ++j)
      EXPECT_NEAR(after.similarity.value().at(i, j), a.at(perm[static_cast<std::size_t>(i)], j), 1e-12);
  EXPECT_LT((after.feature.value().values() - feat.values()).abs().maxCoeff(), 1e-12);
}

TEST(DepthHead, ZeroFinalLayerGivesUniformScores) {
  ParameterSet ps;
  std::mt19937_64 rng(17);
  DepthHead head(ps, "head", 4, 3, 4, rng);
  head.final_weight().value().values().setZero();
  head.final_bias().value().values().setZero();
  Graph g;
  Var s = head(g, g.constant(random_array({4, 3, 5}, rng)));
  EXPECT_EQ(s.shape(), (Shape{4, 3, 5}));
  for (Index i = 0; i < s.value().size(); ++i) EXPECT_DOUBLE_EQ(s.value()[i], 0.25);
  const DepthMap d = expectation_decode(s.value(), init_uniform_guidance(0.0, 4.0, 4));
  EXPECT_TRUE((d - 2.0).abs().maxCoeff() < 1e-15);
}

TEST(DepthHead, RowsSumToOneAndDecodeStaysInGuidanceRange) {
  ParameterSet ps;
  std::mt19937_64 rng(18);
  DepthHead head(ps, "head", 3, 4, 6, rng);
  const DepthGuidance g1 = init_uniform_guidance(0.0, 10.0, 6);
  for (int t = 0; t < 50; ++t) {
    Graph g;
    const NdArray s = head(g, g.constant(random_array({3, 4, 4}, rng, 5.0))).value();
    for (Index p = 0; p < 16; ++p) {
      double total = 0.0;
      for (Index i = 0; i < 6; ++i) total += s[i * 16 + p];
      ASSERT_NEAR(total, 1.0, 1e-9);
    }
    const DepthMap d = expectation_decode(s, g1);
    ASSERT_GE(d.minCoeff(), g1.shared_values()[0]);
    ASSERT_LE(d.maxCoeff(), g1.shared_values()[5]);
  }
}
