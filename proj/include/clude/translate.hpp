#pragma once

// Hierarchical translation: depth cues, global/local guidance offsets,
// guidance adjustment, and the outlier-pruning filter.

#include "clude/depthdata.hpp"
#include "clude/nn.hpp"

#include <initializer_list>

namespace clude {

/// Stacks equally sized grids into a [c, h, w] array.
NdArray stack_grids(std::initializer_list<const Grid*> grids);
/// Channel `c` of a [C, h, w] array.
Grid grid_plane(const NdArray& a, Index c = 0);

/// cue = S - Up(D_prev) at valid sparse pixels, 0 elsewhere. D_prev is [1, h, w]
/// at half the resolution of `sparse` or at the same resolution.
Var compute_cue(Graph& g, const NdArray& sparse, const Var& d_prev);

/// Per-pixel half-width of the local offset band for each guidance value:
/// 0.5 * band_scale * (1 - 1e-2) * min(gap below, gap above, delta); end bins use delta.
NdArray local_band(const NdArray& g_prev, double delta, double band_scale);
Var local_band(Graph& g, const Var& g_prev, double delta, double band_scale);

struct OffsetField {
  Var global;  ///< [1, h, w], meters
  Var local;  ///< [K, h, w], meters, |local| < band
};

/// Residual block on [F || cue], then a linear global regressor and a
/// tanh-bounded local regressor.
class OffsetEstimator {
 public:
  OffsetEstimator() = default;
  OffsetEstimator(ParameterSet& ps, const std::string& name, Index feature_channels, Index cue_channels, Index width,
                  Index k, double delta, std::mt19937_64& rng);

  OffsetField operator()(Graph& g, const Var& feature, const Var& cue, const Var& band) const;

  Parameter& global_weight() const { return global_.weight(); }
  Parameter& global_bias() const { return global_.bias(); }
  Parameter& local_weight() const { return local_.weight(); }
  Parameter& local_bias() const { return local_.bias(); }

 private:
  double delta_ = 1.0;
  ResidualBlock block_;
  Conv2d global_, local_;
};

/// g_s(i) = g_prev(i) + global + local(i); g_prev is [K, h, w].
Var adjust_guidance(const Var& g_prev, const OffsetField& off);

/// S5 = S4 * 1[|S4 - D4| < tau] on valid pixels.
Grid prune_filter(const Grid& s4, const Grid& d4, double tau);

}  // namespace clude
