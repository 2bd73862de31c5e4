#include "clude/cluster.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace clude {

NdArray fourier_position_embedding(Index h, Index w, Index dim) {
  NdArray e({h * w, dim});
  const Index freqs = dim / 4;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double py = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      const double px = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      for (Index j = 0; j < freqs; ++j) {
        const double f = std::numbers::pi * static_cast<double>(j + 1);
        const Index r = y * w + x;
        e.at(r, 4 * j) = std::sin(f * py);
        e.at(r, 4 * j + 1) = std::cos(f * py);
        e.at(r, 4 * j + 2) = std::sin(f * px);
        e.at(r, 4 * j + 3) = std::cos(f * px);
      }
    }
  return e;
}

TransformerLayer::TransformerLayer(ParameterSet& ps, const std::string& name, Index dim, Index heads,
                                   std::mt19937_64& rng)
    : heads_(heads),
      ln1_(ps, name + ".ln1", dim),
      ln2_(ps, name + ".ln2", dim),
      q_(ps, name + ".q", dim, dim, rng),
      k_(ps, name + ".k", dim, dim, rng),
      v_(ps, name + ".v", dim, dim, rng),
      o_(ps, name + ".o", dim, dim, rng),
      mlp1_(ps, name + ".mlp1", dim, 2 * dim, rng),
      mlp2_(ps, name + ".mlp2", 2 * dim, dim, rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("transformer: latent dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Var TransformerLayer::operator()(Graph& g, const Var& x) const {
  const Index dim = x.dim(1), dh = dim / heads_;
  Var h = ln1_(g, x);
  Var q = q_(g, h), k = k_(g, h), v = v_(g, h);
  std::vector<Var> outs;
  for (Index i = 0; i < heads_; ++i) {
    Var qi = slice(q, 1, i * dh, dh), ki = slice(k, 1, i * dh, dh), vi = slice(v, 1, i * dh, dh);
    Var att = softmax(scale(matmul(qi, transpose(ki)), 1.0 / std::sqrt(static_cast<double>(dh))), 1);
    outs.push_back(matmul(att, vi));
  }
  Var y = x + o_(g, heads_ == 1 ? outs[0] : concat(outs, 1));
  return y + mlp2_(g, relu(mlp1_(g, ln2_(g, y))));
}

ClusteringTransformer::ClusteringTransformer(ParameterSet& ps, const std::string& name, const ClusterConfig& cfg,
                                             Index feature_channels, std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.k < 2 || cfg.m <= 0 || cfg.layers < 0) throw ConfigError("cluster: need K >= 2, M > 0, layers >= 0");
  centers_ = &ps.add(name + ".centers", uniform_init({cfg.m, cfg.k}, cfg.m, rng));
  token_proj_ = Linear(ps, name + ".proj", feature_channels, cfg.m, rng);
  for (Index l = 0; l < cfg.layers; ++l)
    layers_.emplace_back(ps, name + ".layer" + std::to_string(l), cfg.m, cfg.heads, rng);
  q_ = Linear(ps, name + ".wq", cfg.m, cfg.m, rng, false);
  k_ = Linear(ps, name + ".wk", cfg.m, cfg.m, rng, false);
  v_ = Linear(ps, name + ".wv", cfg.m, cfg.m, rng, false);
  mlp1_ = Linear(ps, name + ".rec1", cfg.m, cfg.m, rng);
  mlp2_ = Linear(ps, name + ".rec2", cfg.m, cfg.m, rng);
}

Tokens ClusteringTransformer::tokenize(Graph& g, const Var& f1) const {
  const Index c = token_proj_.weight().value().dim(0);
  if (f1.value().rank() != 3 || f1.dim(0) != c) {
    throw ContractViolation("cluster tokenize: expected [" + std::to_string(c) + ",h,w] features, got " +
                            shape_string(f1.shape()));
  }
  const Index h = f1.dim(1), w = f1.dim(2);
  Var points = transpose(reshape(f1, {c, h * w}));
  Var t = token_proj_(g, points) + g.constant(fourier_position_embedding(h, w, cfg_.m));
  return {t, h, w};
}

Var ClusteringTransformer::centers(Graph& g) const { return transpose(g.parameter(*centers_)); }

std::pair<Var, Var> ClusteringTransformer::propagate(Graph& g, const Var& centers, const Var& tokens) const {
  if (centers.dim(1) != tokens.dim(1)) {
    throw ContractViolation("cluster propagate: centers " + shape_string(centers.shape()) + " and tokens " +
                            shape_string(tokens.shape()) + " differ in latent dim");
  }
  if (layers_.empty()) return {centers, tokens};
  Var seq = concat({centers, tokens}, 0);
  for (const auto& layer : layers_) seq = layer(g, seq);
  const Index k = centers.dim(0);
  return {slice(seq, 0, 0, k), slice(seq, 0, k, tokens.dim(0))};
}

Var ClusteringTransformer::group(Graph& g, const Var& c_hat, const Var& t_hat) const {
  return softmax(matmul(q_(g, c_hat), transpose(k_(g, t_hat))), 0);
}

Var ClusteringTransformer::update_centers(Graph& g, const Var& a, const Var& t_hat) const {
  if (a.dim(1) != t_hat.dim(0)) {
    throw ContractViolation("cluster update_centers: A " + shape_string(a.shape()) + " vs tokens " +
                            shape_string(t_hat.shape()));
  }
  return matmul(a, v_(g, t_hat));
}

Var ClusteringTransformer::reconstruct(Graph& g, const Var& a, const Var& c_tilde, const Tokens& t_hat) const {
  if (a.dim(0) != c_tilde.dim(0) || a.dim(1) != t_hat.t.dim(0) || t_hat.t.dim(0) != t_hat.h * t_hat.w) {
    throw ContractViolation("cluster reconstruct: A " + shape_string(a.shape()) + ", centers " +
                            shape_string(c_tilde.shape()) + ", tokens " + shape_string(t_hat.t.shape()));
  }
  Var mix = matmul(transpose(a), c_tilde);
  Var r = t_hat.t + mlp2_(g, relu(mlp1_(g, mix)));
  return reshape(transpose(r), {cfg_.m, t_hat.h, t_hat.w});
}

ClusteringTransformer::Output ClusteringTransformer::operator()(Graph& g, const Var& f1) const {
  const Tokens t = tokenize(g, f1);
  auto [c_hat, t_hat] = propagate(g, centers(g), t.t);
  Var a = group(g, c_hat, t_hat);
  Var c_tilde = update_centers(g, a, t_hat);
  return {reconstruct(g, a, c_tilde, Tokens{t_hat, t.h, t.w}), a};
}

DepthHead::DepthHead(ParameterSet& ps, const std::string& name, Index in, Index hidden, Index k, std::mt19937_64& rng)
    : conv1_(ps, name + ".c1", in, hidden, 3, 1, rng), conv2_(ps, name + ".c2", hidden, k, 3, 1, rng) {}

Var DepthHead::operator()(Graph& g, const Var& feature) const {
  return softmax(conv2_(g, relu(conv1_(g, feature))), 0);
}

}  // namespace clude
