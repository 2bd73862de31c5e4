#pragma once

// Depth guidance values and logistic scores: uniform initialisation, Laplace
// encoding of depths, and expectation (soft-argmax) decoding.

#include "clude/depthdata.hpp"
#include "clude/graph.hpp"

#include <Eigen/Core>

namespace clude {

/// Per-pixel probability vectors over K guidance values, laid out [K, H, W].
/// Rows of invalid pixels are all zero.
using ScoreVolume = NdArray;

/// K guidance depths, either shared by every pixel or given per pixel as [K, H, W].
class DepthGuidance {
 public:
  static DepthGuidance shared(Eigen::VectorXd values);
  static DepthGuidance per_pixel(NdArray values);

  bool is_shared() const { return per_pixel_.empty(); }
  Index count() const { return is_shared() ? shared_.size() : per_pixel_.dim(0); }
  const Eigen::VectorXd& shared_values() const { return shared_; }
  const NdArray& per_pixel_values() const { return per_pixel_; }
  double at(Index i, Index y, Index x) const { return is_shared() ? shared_[i] : per_pixel_.at(i, y, x); }

  /// [K, H, W] broadcast of the guidance (copy of per-pixel values).
  NdArray volume(Index height, Index width) const;

 private:
  Eigen::VectorXd shared_;
  NdArray per_pixel_;
};

/// Bin centres g(i) = d_min + (i - 1/2) * (d_max - d_min) / K.
DepthGuidance init_uniform_guidance(double d_min, double d_max, Index k);

/// Bin width of the uniform initial guidance.
inline double bin_width(double d_min, double d_max, Index k) { return (d_max - d_min) / static_cast<double>(k); }

/// l_i = exp(-|d - g_i| / T) / sum_j exp(-|d - g_j| / T) at valid pixels, zeros elsewhere.
ScoreVolume encode_laplace(const Grid& depth, const DepthGuidance& g, double temperature = 1.0);

/// Cross-entropy targets: the Laplace encoding of ground truth against the initial guidance.
ScoreVolume make_target_scores(const DepthMap& gt, const DepthGuidance& initial, double temperature = 1.0);

/// D(x,y) = sum_i L(x,y,i) g(x,y,i).
DepthMap expectation_decode(const ScoreVolume& scores, const DepthGuidance& g);

// Differentiable counterparts used inside the network.

/// Laplace encoding of a [1,H,W] depth against [K,H,W] guidance (all pixels treated as valid).
Var encode_laplace(const Var& depth, const Var& guidance, double temperature = 1.0);
/// [K,H,W] scores and guidance -> [1,H,W] depth.
Var expectation_decode(const Var& scores, const Var& guidance);

}  // namespace clude
