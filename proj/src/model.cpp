#include "clude/model.hpp"

#include "clude/ops.hpp"

#include <algorithm>
#include <string>

namespace clude {

void validate(const ModelConfig& cfg) {
  if (!(cfg.range.d_max > cfg.range.d_min) || cfg.range.d_min < 0.0) {
    throw ConfigError("model: depth range must satisfy 0 <= d_min < d_max");
  }
  if (cfg.clu.k < 2) throw ConfigError("model: K must be >= 2");
  if (cfg.clu.m <= 0 || cfg.clu.head_width <= 0) throw ConfigError("model: M and head width must be positive");
  if (!(cfg.temperature > 0.0)) throw ConfigError("model: temperature must be positive");
  if (!(cfg.trans.tau > 0.0)) throw ConfigError("model: tau must be positive");
  if (!(cfg.trans.band_scale > 0.0) || cfg.trans.band_scale > 1.0) {
    throw ConfigError("model: band_scale must lie in (0, 1]");
  }
  if (cfg.trans.width_cap < 0) throw ConfigError("model: width_cap must be >= 0");
}

CludeModel::CludeModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), params_(std::make_unique<ParameterSet>()) {
  validate(cfg);
  std::mt19937_64 rng(seed);
  const Index k = cfg.clu.k;
  g1_ = init_uniform_guidance(cfg.range.d_min, cfg.range.d_max, k);
  delta_ = clude::bin_width(cfg.range.d_min, cfg.range.d_max, k);

  ParameterSet& ps = *params_;
  encoder_ = Encoder(ps, "enc", cfg.enc, k, rng);
  cluster_ = ClusteringTransformer(ps, "clu", cfg.clu, encoder_.channels(0), rng);
  for (int s = 0; s < 4; ++s)
    heads_[static_cast<std::size_t>(s)] = DepthHead(ps, "head" + std::to_string(s + 1), cfg.clu.m, cfg.clu.head_width, k, rng);
  if (cfg.trans.offsets) {
    for (int s = 0; s < 4; ++s) {
      const int scale = s < 3 ? s + 1 : 3;
      const Index feat = encoder_.channels(scale);
      const Index width = cfg.trans.width_cap > 0 ? std::min(feat, cfg.trans.width_cap) : feat;
      const Index cue_channels = scale < 3 ? 2 : 1;
      const std::string name = s < 3 ? "off" + std::to_string(s + 2) : std::string(kPtbPrefix) + "off";
      offsets_[static_cast<std::size_t>(s)] = OffsetEstimator(ps, name, feat, cue_channels, width, k, delta_, rng);
    }
  }
}

ForwardResult CludeModel::forward(Graph& g, const SparseDepthMap& sparse, const RgbImage& rgb,
                                  const ForwardOptions& opts) const {
  const Index h = sparse.height(), w = sparse.width();
  for (const Grid& c : rgb.channels) {
    if (c.rows() != h || c.cols() != w) throw ContractViolation("model: rgb and sparse depth are not aligned");
  }
  if (h % 8 != 0 || w % 8 != 0) {
    throw ContractViolation("model: input " + std::to_string(h) + "x" + std::to_string(w) +
                            " is not divisible by 8");
  }

  const Grid normalised = sparse.depth / cfg_.range.d_max;
  Var s_in = g.constant(stack_grids({&normalised}));
  Var rgb_in = g.constant(stack_grids({&rgb.channels[0], &rgb.channels[1], &rgb.channels[2]}));
  Var l_in = g.constant(encode_laplace(sparse.depth, g1_, cfg_.temperature));
  const FeaturePyramid f = encoder_.extract(g, encoder_.preprocess(g, s_in, rgb_in, l_in));

  ForwardResult out;
  const auto clustered = cluster_(g, f.f[0]);
  out.similarity = clustered.similarity;
  Var feat = clustered.feature;
  Var guide = g.constant(g1_.volume(f.f[0].dim(1), f.f[0].dim(2)));
  out.scores.push_back(heads_[0](g, feat));
  out.guidance.push_back(guide);
  out.depth.push_back(expectation_decode(out.scores.back(), guide));

  const SparsePyramid pyr = pool_pyramid(sparse);
  const std::array<NdArray, 3> cue_sources{stack_grids({&pyr.quarter_max, &pyr.quarter_min}),
                                           stack_grids({&pyr.half_max, &pyr.half_min}), stack_grids({&pyr.full})};

  const auto cue_for = [&](const NdArray& src, const Var& d_prev) {
    if (opts.zero_cue) {
      return g.constant(NdArray({src.dim(0), src.dim(1), src.dim(2)}));
    }
    return compute_cue(g, src, d_prev);
  };

  for (int s = 1; s < 4; ++s) {
    const auto is = static_cast<std::size_t>(s);
    feat = upsample2(feat);
    Var scores = heads_[is](g, feat);
    Var g_prev = upsample2(out.guidance.back());
    Var g_s = g_prev;
    if (cfg_.trans.offsets) {
      Var cue = cue_for(cue_sources[is - 1], out.depth.back());
      const OffsetField off = offsets_[is - 1](g, f.f[is], cue, local_band(g, g_prev, delta_, cfg_.trans.band_scale));
      g_s = adjust_guidance(g_prev, off);
    }
    out.scores.push_back(scores);
    out.guidance.push_back(g_s);
    out.depth.push_back(expectation_decode(scores, g_s));
  }

  if (cfg_.trans.offsets && opts.run_ptb) {
    const Var d4 = out.depth.back(), g4 = out.guidance.back();
    Grid s5 = prune_filter(sparse.depth, grid_plane(d4.value()), cfg_.trans.tau);
    Var cue = cue_for(stack_grids({&s5}), d4);
    const OffsetField off = offsets_[3](g, f.f[3], cue, local_band(g, g4, delta_, cfg_.trans.band_scale));
    Var g5 = adjust_guidance(g4, off);
    out.guidance.push_back(g5);
    out.depth.push_back(expectation_decode(out.scores.back(), g5));
    out.corrected_sparse = std::move(s5);
  }
  return out;
}

Prediction CludeModel::predict(const SparseDepthMap& sparse, const RgbImage& rgb, const ForwardOptions& opts) const {
  Graph g;
  g.set_grad_enabled(false);
  const ForwardResult r = forward(g, sparse, rgb, opts);
  Prediction p;
  for (const Var& d : r.depth) p.stages.push_back(grid_plane(d.value()));
  const double lo = std::max(cfg_.range.d_min, 1e-3);
  p.depth = p.stages.back().cwiseMax(lo).cwiseMin(cfg_.range.d_max);
  p.corrected_sparse = r.corrected_sparse;
  return p;
}

}  // namespace clude
