#include "clude/translate.hpp"

#include "clude/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace clude {

NdArray stack_grids(std::initializer_list<const Grid*> grids) {
  const Grid& first = **grids.begin();
  const Index h = first.rows(), w = first.cols();
  NdArray out({static_cast<Index>(grids.size()), h, w});
  Index c = 0;
  for (const Grid* g : grids) {
    if (g->rows() != h || g->cols() != w) throw ContractViolation("stack_grids: grid shapes differ");
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) out.at(c, y, x) = (*g)(y, x);
    ++c;
  }
  return out;
}

Grid grid_plane(const NdArray& a, Index c) {
  if (a.rank() != 3 || c < 0 || c >= a.dim(0)) {
    throw ContractViolation("grid_plane: no channel " + std::to_string(c) + " in " + shape_string(a.shape()));
  }
  const Index h = a.dim(1), w = a.dim(2);
  return Eigen::Map<const Grid>(a.data() + c * h * w, h, w);
}

Var compute_cue(Graph& g, const NdArray& sparse, const Var& d_prev) {
  if (sparse.rank() != 3 || d_prev.value().rank() != 3 || d_prev.dim(0) != 1) {
    throw ContractViolation("compute_cue: expected [c,h,w] sparse and [1,h,w] prediction, got " +
                            shape_string(sparse.shape()) + " and " + shape_string(d_prev.shape()));
  }
  const Index c = sparse.dim(0), h = sparse.dim(1), w = sparse.dim(2);
  Var up;
  if (d_prev.dim(1) == h && d_prev.dim(2) == w) {
    up = d_prev;
  } else if (2 * d_prev.dim(1) == h && 2 * d_prev.dim(2) == w) {
    up = upsample2(d_prev);
  } else {
    throw ContractViolation("compute_cue: prediction " + shape_string(d_prev.shape()) + " is not at the scale of " +
                            shape_string(sparse.shape()) + " or one coarser");
  }
  NdArray mask(sparse.shape());
  mask.values() = (sparse.values() > 0.0).cast<double>();
  Var upc = c == 1 ? up : expand_axis(up, 0, c);
  return g.constant(sparse) - g.constant(mask) * upc;
}

NdArray local_band(const NdArray& g_prev, double delta, double band_scale) {
  const Index k = g_prev.dim(0), hw = g_prev.dim(1) * g_prev.dim(2);
  const double c = 0.5 * band_scale * (1.0 - 1e-2);
  NdArray band(g_prev.shape());
  for (Index i = 0; i < k; ++i)
    for (Index p = 0; p < hw; ++p) {
      double gap = delta;
      if (i > 0) gap = std::min(gap, g_prev[i * hw + p] - g_prev[(i - 1) * hw + p]);
      if (i + 1 < k) gap = std::min(gap, g_prev[(i + 1) * hw + p] - g_prev[i * hw + p]);
      band[i * hw + p] = c * std::max(gap, 0.0);
    }
  return band;
}

Var local_band(Graph& g, const Var& g_prev, double delta, double band_scale) {
  const Index k = g_prev.dim(0), h = g_prev.dim(1), w = g_prev.dim(2);
  const Var cap = g.constant(NdArray({1, h, w}, delta));
  const Var gaps = slice(g_prev, 0, 1, k - 1) - slice(g_prev, 0, 0, k - 1);
  const Var gap = minimum(minimum(concat({cap, gaps}, 0), concat({gaps, cap}, 0)), expand_axis(cap, 0, k));
  return scale(relu(gap), 0.5 * band_scale * (1.0 - 1e-2));
}

OffsetEstimator::OffsetEstimator(ParameterSet& ps, const std::string& name, Index feature_channels,
                                 Index cue_channels, Index width, Index k, double delta, std::mt19937_64& rng)
    : delta_(delta),
      block_(ps, name + ".res", feature_channels + cue_channels, width, rng),
      global_(ps, name + ".global", width, 1, 3, 1, rng),
      local_(ps, name + ".local", width, k, 3, 1, rng) {
  if (!(delta > 0.0)) throw ConfigError("offset estimator: band width must be positive");
}

OffsetField OffsetEstimator::operator()(Graph& g, const Var& feature, const Var& cue, const Var& band) const {
  if (feature.dim(1) != cue.dim(1) || feature.dim(2) != cue.dim(2)) {
    throw ContractViolation("estimate_offsets: feature " + shape_string(feature.shape()) + " and cue " +
                            shape_string(cue.shape()) + " are at different scales");
  }
  Var h = block_(g, concat({feature, scale(cue, 1.0 / delta_)}, 0));
  OffsetField off;
  off.global = scale(global_(g, h), delta_);
  off.local = tanh(local_(g, h)) * band;
  return off;
}

Var adjust_guidance(const Var& g_prev, const OffsetField& off) {
  if (off.local.shape() != g_prev.shape() || off.global.dim(0) != 1 || off.global.dim(1) != g_prev.dim(1) ||
      off.global.dim(2) != g_prev.dim(2)) {
    throw ContractViolation("adjust_guidance: guidance " + shape_string(g_prev.shape()) + ", global " +
                            shape_string(off.global.shape()) + ", local " + shape_string(off.local.shape()));
  }
  return g_prev + expand_axis(off.global, 0, g_prev.dim(0)) + off.local;
}

Grid prune_filter(const Grid& s4, const Grid& d4, double tau) {
  if (!(tau > 0.0)) throw ConfigError("prune_filter: tau must be positive, got " + std::to_string(tau));
  if (s4.rows() != d4.rows() || s4.cols() != d4.cols()) {
    throw ContractViolation("prune_filter: sparse and prediction maps are not aligned");
  }
  return (s4 > 0.0 && (s4 - d4).abs() < tau).select(s4, Grid::Zero(s4.rows(), s4.cols()));
}

}  // namespace clude
