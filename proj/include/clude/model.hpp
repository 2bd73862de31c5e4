#pragma once

// The full completion network: encoder, clustering transformer with initial
// depth head, three translation scales and the prune translation block.

#include "clude/cluster.hpp"
#include "clude/encoder.hpp"
#include "clude/guidance.hpp"
#include "clude/translate.hpp"

#include <array>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace clude {

struct ForwardOptions {
  bool zero_cue = false;  ///< replace every depth cue by zeros
  bool run_ptb = true;
};

struct ForwardResult {
  std::vector<Var> depth;  ///< D1 .. D4 (and D5 when the prune block ran), [1, h_s, w_s]
  std::vector<Var> scores;  ///< L1 .. L4, [K, h_s, w_s]
  std::vector<Var> guidance;  ///< g1 .. g4 (and g5), [K, h_s, w_s]
  Var similarity;  ///< [K, N]
  std::optional<Grid> corrected_sparse;  ///< S5

  const Var& final_depth() const { return depth.back(); }
};

struct Prediction {
  std::vector<DepthMap> stages;  ///< D1 .. D5 at their own resolution
  DepthMap depth;  ///< final stage clamped to [max(d_min, 1 mm), d_max]
  std::optional<Grid> corrected_sparse;
};

class CludeModel {
 public:
  static constexpr std::string_view kPtbPrefix = "ptb.";

  CludeModel(const ModelConfig& cfg, std::uint64_t seed);

  ForwardResult forward(Graph& g, const SparseDepthMap& sparse, const RgbImage& rgb,
                        const ForwardOptions& opts = {}) const;
  /// Gradient-free forward pass.
  Prediction predict(const SparseDepthMap& sparse, const RgbImage& rgb, const ForwardOptions& opts = {}) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& parameters() { return *params_; }
  const ParameterSet& parameters() const { return *params_; }
  const DepthGuidance& initial_guidance() const { return g1_; }
  double bin_width() const { return delta_; }

  const Encoder& encoder() const { return encoder_; }
  const ClusteringTransformer& cluster() const { return cluster_; }
  const DepthHead& head(int s) const { return heads_[static_cast<std::size_t>(s)]; }
  /// Offset estimators for scales 1/4, 1/2, 1 and (index 3) the prune block.
  const OffsetEstimator& offsets(int s) const { return offsets_[static_cast<std::size_t>(s)]; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParameterSet> params_;
  DepthGuidance g1_;
  double delta_ = 1.0;
  Encoder encoder_;
  ClusteringTransformer cluster_;
  std::array<DepthHead, 4> heads_;
  std::array<OffsetEstimator, 4> offsets_;
};

/// Validates the model configuration; throws ConfigError.
void validate(const ModelConfig& cfg);

}  // namespace clude
