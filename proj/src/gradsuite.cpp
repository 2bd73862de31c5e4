#include "clude/gradsuite.hpp"

#include "clude/gradcheck.hpp"
#include "clude/model.hpp"
#include "clude/objective.hpp"
#include "clude/ops.hpp"

#include <functional>
#include <random>

namespace clude {
namespace {

NdArray random_array(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  NdArray t(std::move(s));
  for (Index i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

// Fixed random contraction so every output coordinate reaches the scalar.
Var contract(Graph& g, const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, g.constant(random_array(y.shape(), rng))));
}

struct OpCase {
  std::string name;
  Shape shape;
  ScalarFn f;
  double lo = -1.0, hi = 1.0;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> c;
  c.push_back({"add+square", {3, 4}, [](Graph& g, const Var& x) { return contract(g, add(x, square(x)), 1); }});
  c.push_back({"sub+mul", {3, 4}, [](Graph& g, const Var& x) { return contract(g, sub(x, mul(x, x)), 2); }});
  c.push_back({"tanh", {3, 4}, [](Graph& g, const Var& x) { return contract(g, tanh(x), 3); }});
  c.push_back({"exp", {3, 4}, [](Graph& g, const Var& x) { return contract(g, exp(x), 4); }});
  c.push_back({"scale+add_scalar", {3, 4},
               [](Graph& g, const Var& x) { return contract(g, scale(add_scalar(x, 2.0), -1.5), 5); }});
  c.push_back({"log_clamped", {3, 4}, [](Graph& g, const Var& x) { return contract(g, log_clamped(x, 1e-12), 6); }, 0.1,
               2.0});
  c.push_back({"mean", {3, 4}, [](Graph&, const Var& x) { return mean(x); }});
  c.push_back({"abs", {3, 4}, [](Graph& g, const Var& x) { return contract(g, abs(add_scalar(x, -1.5)), 7); }, 0.0, 1.0});
  c.push_back({"relu+", {3, 4}, [](Graph& g, const Var& x) { return contract(g, relu(x), 8); }, 0.1, 1.0});
  c.push_back({"relu-", {3, 4}, [](Graph& g, const Var& x) { return contract(g, relu(x), 8); }, -1.0, -0.1});
  c.push_back({"leaky_relu+", {3, 4}, [](Graph& g, const Var& x) { return contract(g, leaky_relu(x, 0.1), 8); }, 0.1, 1.0});
  c.push_back({"leaky_relu-", {3, 4}, [](Graph& g, const Var& x) { return contract(g, leaky_relu(x, 0.1), 8); }, -1.0, -0.1});
  c.push_back({"minimum", {2, 5},
               [](Graph& g, const Var& x) { return contract(g, minimum(x, g.constant(NdArray({2, 5}, 0.0))), 9); }});
  for (int axis = 0; axis < 3; ++axis) {
    c.push_back({"softmax axis " + std::to_string(axis), {3, 4, 2},
                 [axis](Graph& g, const Var& x) { return contract(g, softmax(x, axis), 10 + axis); }});
  }
  c.push_back({"sum_axis", {3, 4, 2},
               [](Graph& g, const Var& x) { return contract(g, sum_axis(x, 0), 20) + contract(g, sum_axis(x, 2), 21); }});
  c.push_back({"expand_axis", {1, 4, 2}, [](Graph& g, const Var& x) { return contract(g, expand_axis(x, 0, 3), 22); }});
  c.push_back({"add_bias", {4}, [](Graph& g, const Var& x) {
                 std::mt19937_64 rng(23);
                 return contract(g, add_bias(g.constant(random_array({4, 3, 3}, rng)), x, 0), 24);
               }});
  c.push_back({"matmul+transpose", {3, 4}, [](Graph& g, const Var& x) {
                 std::mt19937_64 rng(30);
                 Var b = g.constant(random_array({4, 2}, rng));
                 return contract(g, matmul(x, b), 31) + contract(g, matmul(transpose(b), transpose(x)), 32);
               }});
  c.push_back({"reshape", {2, 3, 4}, [](Graph& g, const Var& x) { return contract(g, reshape(x, {6, 4}), 33); }});
  c.push_back({"concat+slice", {2, 3, 4}, [](Graph& g, const Var& x) {
                 return contract(g, concat({x, scale(x, 2.0), slice(x, 1, 1, 2)}, 1), 34) +
                        contract(g, concat({x, x}, 0), 35);
               }});
  c.push_back({"conv2d input", {2, 5, 6}, [](Graph& g, const Var& x) {
                 std::mt19937_64 rng(40);
                 return contract(g, conv2d(x, g.constant(random_array({3, 2, 3, 3}, rng)), 1), 41);
               }});
  c.push_back({"conv2d weight stride 2", {3, 2, 3, 3}, [](Graph& g, const Var& w) {
                 std::mt19937_64 rng(42);
                 return contract(g, conv2d(g.constant(random_array({2, 6, 6}, rng)), w, 2), 43);
               }});
  c.push_back({"resize_bilinear", {2, 3, 4}, [](Graph& g, const Var& x) {
                 return contract(g, resize_bilinear(x, 6, 8), 46) + contract(g, resize_bilinear(x, 2, 3), 47);
               }});
  c.push_back({"adaptive_avg_pool", {2, 3, 5}, [](Graph& g, const Var& x) {
                 return contract(g, adaptive_avg_pool(x, 1), 48) + contract(g, adaptive_avg_pool(x, 2), 49) +
                        contract(g, adaptive_avg_pool(x, 4), 50);
               }});
  c.push_back({"layer_norm", {4, 5}, [](Graph& g, const Var& x) {
                 std::mt19937_64 rng(51);
                 return contract(g, layer_norm(x, g.constant(random_array({5}, rng)), g.constant(random_array({5}, rng))),
                                 52);
               }});
  return c;
}

SuiteResult check_op(const OpCase& c, const SuiteOptions& o) {
  SuiteResult r{c.name, 0.0, o.op_tolerance, {}};
  std::mt19937_64 rng(1234);
  for (int p = 0; p < o.points; ++p) {
    Parameter x("x", random_array(c.shape, rng, c.lo, c.hi));
    Parameter* list[] = {&x};
    const auto rep = check_parameter_gradients([&](Graph& g) { return c.f(g, g.parameter(x)); }, list, o.step, 0, 0,
                                               o.corrupt);
    if (rep.max_rel_error >= r.max_rel_error) {
      r.max_rel_error = rep.max_rel_error;
      r.worst = "point " + std::to_string(p) + " " + rep.worst;
    }
  }
  return r;
}

SuiteResult check_pipeline(const SuiteOptions& o) {
  ModelConfig c;
  c.range = {0.0, 10.0};
  c.enc.pre_width = 2;
  c.enc.base_width = 2;
  c.enc.blocks = 1;
  c.enc.spp_bins = {1, 2};
  c.clu.k = 4;
  c.clu.m = 8;
  c.clu.layers = 1;
  c.clu.head_width = 4;
  c.trans.tau = 0.25;
  CludeModel model(c, 13);
  // Zero-initialised biases would put ReLUs exactly on their kinks.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (Parameter* p : model.parameters().all())
    for (Index i = 0; i < p->value().size(); ++i) p->value()[i] += jitter(rng);
  SceneConfig sc;
  sc.height = sc.width = 8;
  sc.objects = 2;
  sc.density = 0.3;
  const SceneSample s = synth_scene(sc, 14);
  auto loss = [&](Graph& g) {
    const ForwardResult r = model.forward(g, s.sparse, s.rgb);
    return total_loss(compute_losses(g, r, s.gt, model.initial_guidance(), 1.0), LossWeights{});
  };
  const auto rep = check_parameter_gradients(loss, model.parameters().all(), o.step, 0, 0, o.corrupt);
  return {"pipeline 8x8 K=4 M=8", rep.max_rel_error, o.pipeline_tolerance, rep.worst};
}

}  // namespace

std::vector<SuiteResult> run_gradient_suite(const SuiteOptions& opts) {
  std::vector<SuiteResult> out;
  for (const OpCase& c : op_cases()) out.push_back(check_op(c, opts));
  if (opts.pipeline) out.push_back(check_pipeline(opts));
  return out;
}

}  // namespace clude
