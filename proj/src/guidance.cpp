#include "clude/guidance.hpp"

#include "clude/ops.hpp"

#include <cmath>
#include <string>

namespace clude {

DepthGuidance DepthGuidance::shared(Eigen::VectorXd values) {
  DepthGuidance g;
  g.shared_ = std::move(values);
  return g;
}

DepthGuidance DepthGuidance::per_pixel(NdArray values) {
  if (values.rank() != 3) {
    throw ContractViolation("DepthGuidance: per-pixel values must be [K,H,W], got " + shape_string(values.shape()));
  }
  DepthGuidance g;
  g.per_pixel_ = std::move(values);
  return g;
}

NdArray DepthGuidance::volume(Index height, Index width) const {
  if (!is_shared()) {
    if (per_pixel_.dim(1) != height || per_pixel_.dim(2) != width) {
      throw ContractViolation("DepthGuidance: per-pixel guidance " + shape_string(per_pixel_.shape()) +
                              " does not cover " + std::to_string(height) + "x" + std::to_string(width));
    }
    return per_pixel_;
  }
  NdArray v({shared_.size(), height, width});
  for (Index i = 0; i < shared_.size(); ++i) v.values().segment(i * height * width, height * width).setConstant(shared_[i]);
  return v;
}

DepthGuidance init_uniform_guidance(double d_min, double d_max, Index k) {
  if (k < 2) throw ConfigError("init_uniform_guidance: K must be >= 2, got " + std::to_string(k));
  if (!(d_max > d_min) || d_min < 0.0) {
    throw ConfigError("init_uniform_guidance: require d_max > d_min >= 0");
  }
  const double delta = bin_width(d_min, d_max, k);
  Eigen::VectorXd g(k);
  for (Index i = 0; i < k; ++i) g[i] = d_min + (static_cast<double>(i) + 0.5) * delta;
  return DepthGuidance::shared(std::move(g));
}

ScoreVolume encode_laplace(const Grid& depth, const DepthGuidance& g, double temperature) {
  if (!g.is_shared()) throw ContractViolation("encode_laplace: guidance must be pixel-shared");
  if (!(temperature > 0.0)) throw ConfigError("encode_laplace: temperature must be positive");
  const Index k = g.count(), h = depth.rows(), w = depth.cols();
  const Eigen::VectorXd& gv = g.shared_values();
  ScoreVolume out({k, h, w});
  Eigen::ArrayXd logits(k);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double d = depth(y, x);
      if (!(d > 0.0)) continue;
      logits = -(d - gv.array()).abs() / temperature;
      const Eigen::ArrayXd e = (logits - logits.maxCoeff()).exp();
      const double total = e.sum();
      for (Index i = 0; i < k; ++i) out.at(i, y, x) = e[i] / total;
    }
  return out;
}

ScoreVolume make_target_scores(const DepthMap& gt, const DepthGuidance& initial, double temperature) {
  return encode_laplace(gt, initial, temperature);
}

DepthMap expectation_decode(const ScoreVolume& scores, const DepthGuidance& g) {
  if (scores.rank() != 3 || scores.dim(0) != g.count()) {
    throw ContractViolation("expectation_decode: scores " + shape_string(scores.shape()) + " do not match K=" +
                            std::to_string(g.count()));
  }
  const Index k = scores.dim(0), h = scores.dim(1), w = scores.dim(2);
  DepthMap d = DepthMap::Zero(h, w);
  for (Index i = 0; i < k; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) d(y, x) += scores.at(i, y, x) * g.at(i, y, x);
  return d;
}

Var encode_laplace(const Var& depth, const Var& guidance, double temperature) {
  if (depth.value().rank() != 3 || depth.dim(0) != 1 || guidance.value().rank() != 3 ||
      depth.dim(1) != guidance.dim(1) || depth.dim(2) != guidance.dim(2)) {
    throw ContractViolation("encode_laplace: depth " + shape_string(depth.shape()) + " incompatible with guidance " +
                            shape_string(guidance.shape()));
  }
  Var dist = abs(expand_axis(depth, 0, guidance.dim(0)) - guidance);
  return softmax(scale(dist, -1.0 / temperature), 0);
}

Var expectation_decode(const Var& scores, const Var& guidance) {
  if (scores.shape() != guidance.shape()) {
    throw ContractViolation("expectation_decode: K mismatch between scores " + shape_string(scores.shape()) +
                            " and guidance " + shape_string(guidance.shape()));
  }
  return sum_axis(scores * guidance, 0);
}

}  // namespace clude
