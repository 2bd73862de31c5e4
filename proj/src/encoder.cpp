#include "clude/encoder.hpp"

#include <string>

namespace clude {

Encoder::Encoder(ParameterSet& ps, const std::string& name, const EncoderConfig& cfg, Index k, std::mt19937_64& rng)
    : cfg_(cfg), k_(k) {
  if (cfg.pre_width <= 0 || cfg.base_width <= 0 || cfg.blocks <= 0) {
    throw ConfigError("encoder: widths and block count must be positive");
  }
  if (cfg.spp_bins.empty()) throw ConfigError("encoder: spp_bins must not be empty");
  for (Index b : cfg.spp_bins)
    if (b <= 0) throw ConfigError("encoder: spp bin sizes must be positive");

  const Index p = cfg.pre_width;
  pre_sparse_ = Conv2d(ps, name + ".pre_sparse", 1, p, 3, 1, rng);
  pre_rgb_ = Conv2d(ps, name + ".pre_rgb", 3, p, 3, 1, rng);
  pre_scores_ = Conv2d(ps, name + ".pre_scores", k, p, 3, 1, rng);

  for (int s = 0; s < 4; ++s) {
    const Index w = cfg.stage_width(s);
    Index in = w;
    if (s == 0) {
      in = 3 * p;
    } else {
      down_[static_cast<std::size_t>(s - 1)] =
          Conv2d(ps, name + ".down" + std::to_string(s), cfg.stage_width(s - 1), w, 3, 2, rng);
    }
    for (Index b = 0; b < cfg.blocks; ++b) {
      stages_[static_cast<std::size_t>(s)].emplace_back(
          ps, name + ".s" + std::to_string(s) + ".b" + std::to_string(b), b == 0 ? in : w, w, rng);
    }
  }

  const Index top = cfg.stage_width(3);
  spp_fuse_ = Conv2d(ps, name + ".spp", top * static_cast<Index>(1 + cfg.spp_bins.size()), top, 1, 1, rng);

  for (int u = 0; u < 3; ++u) {
    const Index from = cfg.stage_width(3 - u), to = cfg.stage_width(2 - u);
    lateral_[static_cast<std::size_t>(u)] = Conv2d(ps, name + ".lat" + std::to_string(u), from, to, 1, 1, rng);
    up_blocks_[static_cast<std::size_t>(u)] = ResidualBlock(ps, name + ".up" + std::to_string(u), to, to, rng);
  }
}

Var Encoder::preprocess(Graph& g, const Var& sparse, const Var& rgb, const Var& scores) const {
  const auto spatial = [](const Var& v) { return v.value().rank() == 3; };
  if (!spatial(sparse) || !spatial(rgb) || !spatial(scores) || sparse.dim(0) != 1 || rgb.dim(0) != 3 ||
      scores.dim(0) != k_ || rgb.dim(1) != sparse.dim(1) || rgb.dim(2) != sparse.dim(2) ||
      scores.dim(1) != sparse.dim(1) || scores.dim(2) != sparse.dim(2)) {
    throw ContractViolation("encoder preprocess: misaligned inputs sparse " + shape_string(sparse.shape()) + ", rgb " +
                            shape_string(rgb.shape()) + ", scores " + shape_string(scores.shape()) +
                            " (K=" + std::to_string(k_) + ")");
  }
  return concat({pre_sparse_(g, sparse), pre_rgb_(g, rgb), pre_scores_(g, scores)}, 0);
}

FeaturePyramid Encoder::extract(Graph& g, const Var& pre) const {
  if (pre.value().rank() != 3 || pre.dim(1) % 8 != 0 || pre.dim(2) % 8 != 0) {
    throw ContractViolation("encoder extract: spatial dims of " + shape_string(pre.shape()) +
                            " must be divisible by 8");
  }
  std::array<Var, 4> e;
  Var x = leaky_relu(pre, kLeak);
  for (int s = 0; s < 4; ++s) {
    if (s > 0) x = leaky_relu(down_[static_cast<std::size_t>(s - 1)](g, x), kLeak);
    for (const auto& block : stages_[static_cast<std::size_t>(s)]) x = block(g, x);
    e[static_cast<std::size_t>(s)] = x;
  }

  const Var& top = e[3];
  std::vector<Var> parts{top};
  for (Index b : cfg_.spp_bins) parts.push_back(resize_bilinear(adaptive_avg_pool(top, b), top.dim(1), top.dim(2)));

  FeaturePyramid out;
  out.f[0] = top + spp_fuse_(g, concat(parts, 0));
  for (int u = 0; u < 3; ++u) {
    const auto iu = static_cast<std::size_t>(u);
    Var up = lateral_[iu](g, upsample2(out.f[iu]));
    out.f[iu + 1] = up_blocks_[iu](g, up + e[static_cast<std::size_t>(2 - u)]);
  }
  return out;
}

}  // namespace clude
