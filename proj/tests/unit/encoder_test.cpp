#include "clude/encoder.hpp"
#include "clude/gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace clude;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.pre_width = 2;
  c.base_width = 2;
  c.blocks = 1;
  c.spp_bins = {1, 2};
  return c;
}

NdArray random_array(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  NdArray a(std::move(shape));
  for (Index i = 0; i < a.size(); ++i) a[i] = u(rng);
  return a;
}

struct Inputs {
  NdArray sparse, rgb, scores;
};

Inputs random_inputs(Index h, Index w, Index k, std::mt19937_64& rng) {
  return {random_array({1, h, w}, rng), random_array({3, h, w}, rng), random_array({k, h, w}, rng)};
}

}  // namespace

TEST(EncoderPreprocess, ZeroWeightsGiveZeroOutput) {
  ParameterSet ps;
  std::mt19937_64 rng(1);
  Encoder enc(ps, "enc", EncoderConfig{}, 5, rng);
  for (Parameter* p : ps.with_prefix("enc.pre_")) p->value().values().setZero();
  const Inputs in = random_inputs(16, 8, 5, rng);
  Graph g;
  Var out = enc.preprocess(g, g.constant(in.sparse), g.constant(in.rgb), g.constant(in.scores));
  EXPECT_EQ(out.shape(), (Shape{3 * EncoderConfig{}.pre_width, 16, 8}));
  EXPECT_EQ(out.value().values().abs().maxCoeff(), 0.0);
}

TEST(EncoderPreprocess, ChannelCountIsSumOfBranchWidths) {
  ParameterSet ps;
  std::mt19937_64 rng(2);
  EncoderConfig cfg = tiny_config();
  cfg.pre_width = 3;
  Encoder enc(ps, "enc", cfg, 4, rng);
  const Inputs in = random_inputs(8, 8, 4, rng);
  Graph g;
  EXPECT_EQ(enc.preprocess(g, g.constant(in.sparse), g.constant(in.rgb), g.constant(in.scores)).dim(0), 9);
}

TEST(EncoderPreprocess, MisalignedInputsAreContractViolations) {
  ParameterSet ps;
  std::mt19937_64 rng(3);
  Encoder enc(ps, "enc", tiny_config(), 4, rng);
  Graph g;
  const Inputs ok = random_inputs(8, 8, 4, rng);
  const Inputs bad = random_inputs(8, 16, 4, rng);
  EXPECT_THROW(enc.preprocess(g, g.constant(ok.sparse), g.constant(bad.rgb), g.constant(ok.scores)), ContractViolation);
  EXPECT_THROW(enc.preprocess(g, g.constant(ok.sparse), g.constant(ok.rgb), g.constant(random_array({3, 8, 8}, rng))),
               ContractViolation);
}

TEST(EncoderExtract, ScaleLaw) {
  ParameterSet ps;
  std::mt19937_64 rng(4);
  Encoder enc(ps, "enc", tiny_config(), 4, rng);
  for (Index size : {64, 128}) {
    Graph g;
    const Inputs in = random_inputs(size, size / 2, 4, rng);
    const FeaturePyramid f =
        enc.extract(g, enc.preprocess(g, g.constant(in.sparse), g.constant(in.rgb), g.constant(in.scores)));
    const Index div[] = {8, 4, 2, 1};
    for (int i = 0; i < 4; ++i) {
      EXPECT_EQ(f.f[static_cast<std::size_t>(i)].dim(0), enc.channels(i));
      EXPECT_EQ(f.f[static_cast<std::size_t>(i)].dim(1), size / div[i]);
      EXPECT_EQ(f.f[static_cast<std::size_t>(i)].dim(2), size / 2 / div[i]);
    }
  }
}

TEST(EncoderExtract, DefaultWidthsPerScale) {
  ParameterSet ps;
  std::mt19937_64 rng(5);
  Encoder enc(ps, "enc", EncoderConfig{}, 16, rng);
  EXPECT_EQ(enc.channels(0), 64);
  EXPECT_EQ(enc.channels(1), 48);
  EXPECT_EQ(enc.channels(2), 32);
  EXPECT_EQ(enc.channels(3), 16);
}

TEST(EncoderExtract, IndivisibleDimsAreContractViolations) {
  ParameterSet ps;
  std::mt19937_64 rng(6);
  Encoder enc(ps, "enc", tiny_config(), 4, rng);
  Graph g;
  EXPECT_THROW(enc.extract(g, g.constant(random_array({6, 60, 64}, rng))), ContractViolation);
}

TEST(EncoderExtract, FiniteForRandomInputsOver100Seeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ParameterSet ps;
    std::mt19937_64 rng(seed);
    Encoder enc(ps, "enc", tiny_config(), 3, rng);
    const Inputs in = random_inputs(16, 16, 3, rng);
    Graph g;
    const FeaturePyramid f =
        enc.extract(g, enc.preprocess(g, g.constant(in.sparse), g.constant(in.rgb), g.constant(in.scores)));
    for (const Var& v : f.f) ASSERT_TRUE(v.value().all_finite()) << seed;
  }
}

TEST(EncoderGradients, EveryScaleToPreprocessWeights) {
  ParameterSet ps;
  std::mt19937_64 rng(7);
  Encoder enc(ps, "enc", tiny_config(), 3, rng);
  const Inputs in = random_inputs(8, 8, 3, rng);
  const auto pre = ps.with_prefix("enc.pre_");
  for (int i = 0; i < 4; ++i) {
    Shape shape{enc.channels(i), 8 >> (3 - i), 8 >> (3 - i)};
    const NdArray probe = random_array(shape, rng);
    auto loss = [&](Graph& g) {
      const FeaturePyramid f =
          enc.extract(g, enc.preprocess(g, g.constant(in.sparse), g.constant(in.rgb), g.constant(in.scores)));
      return sum(f.f[static_cast<std::size_t>(i)] * g.constant(probe));
    };
    const GradCheckReport r = check_parameter_gradients(loss, pre, 1e-5);
    EXPECT_LE(r.max_rel_error, 1e-5) << "F" << i + 1 << " worst " << r.worst;
  }
}
