#pragma once

// U-shaped feature encoder: three input branches, a residual down path with
// spatial pyramid pooling at 1/8 scale, and an additive-skip up path.

#include "clude/model_config.hpp"
#include "clude/nn.hpp"

#include <array>
#include <vector>

namespace clude {

/// F[0] .. F[3] at scales 1/8, 1/4, 1/2, 1, each [C, H*s, W*s].
struct FeaturePyramid {
  std::array<Var, 4> f;

  const Var& at_scale(int i) const { return f[static_cast<std::size_t>(i)]; }
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterSet& ps, const std::string& name, const EncoderConfig& cfg, Index k, std::mt19937_64& rng);

  /// sparse [1,H,W], rgb [3,H,W], scores [K,H,W] -> [3 * pre_width, H, W].
  Var preprocess(Graph& g, const Var& sparse, const Var& rgb, const Var& scores) const;
  /// H and W of `pre` must be divisible by 8.
  FeaturePyramid extract(Graph& g, const Var& pre) const;

  /// Channels of F[i].
  Index channels(int i) const { return cfg_.stage_width(3 - i); }
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Index k_ = 0;
  Conv2d pre_sparse_, pre_rgb_, pre_scores_;
  std::array<Conv2d, 3> down_;  // into scales 1/2, 1/4, 1/8
  std::array<std::vector<ResidualBlock>, 4> stages_;  // scales 1, 1/2, 1/4, 1/8
  Conv2d spp_fuse_;
  std::array<Conv2d, 3> lateral_;  // up path: 1/8 -> 1/4 -> 1/2 -> 1
  std::array<ResidualBlock, 3> up_blocks_;
};

}  // namespace clude
