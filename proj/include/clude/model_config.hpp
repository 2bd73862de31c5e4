#pragma once

#include "clude/depthdata.hpp"

#include <vector>

namespace clude {

struct EncoderConfig {
  Index pre_width = 8;  ///< width of each of the three input branches
  Index base_width = 16;  ///< stage widths are base * {1, 2, 3, 4} for scales 1 .. 1/8
  Index blocks = 2;  ///< residual blocks per encoder stage
  std::vector<Index> spp_bins{1, 2, 4};

  Index stage_width(int stage) const { return base_width * (stage + 1); }
};

struct ClusterConfig {
  Index k = 16;  ///< depth centers == guidance values
  Index m = 64;  ///< latent dim
  Index layers = 2;
  Index heads = 1;
  Index head_width = 32;  ///< hidden width of the depth heads
};

struct TranslateConfig {
  double tau = 0.25;
  double band_scale = 1.0;  ///< local offset band as a fraction of the half gap
  bool offsets = true;  ///< hierarchical translation on/off (ablation)
  Index width_cap = 0;  ///< 0: offset estimators use the feature width
};

struct ModelConfig {
  DepthRange range;
  double temperature = 1.0;
  EncoderConfig enc;
  ClusterConfig clu;
  TranslateConfig trans;
};

}  // namespace clude
