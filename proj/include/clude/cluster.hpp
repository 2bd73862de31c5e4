#pragma once

// Clustering transformer over the 1/8-scale features: learnable depth centers,
// joint self-attention, soft grouping of tokens into centers, center update,
// feature reconstruction, and the per-scale depth heads.

#include "clude/model_config.hpp"
#include "clude/nn.hpp"

#include <utility>
#include <vector>

namespace clude {

/// Fixed sin/cos embedding of the cell centres of an h x w grid, [h*w, dim].
/// Uses dim/4 frequencies per axis; trailing columns (dim % 4) stay zero.
NdArray fourier_position_embedding(Index h, Index w, Index dim);

/// Pre-norm transformer layer: x + Attn(LN(x)), then x + MLP(LN(x)).
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterSet& ps, const std::string& name, Index dim, Index heads, std::mt19937_64& rng);
  Var operator()(Graph& g, const Var& x) const;

 private:
  Index heads_ = 1;
  LayerNorm ln1_, ln2_;
  Linear q_, k_, v_, o_;
  Linear mlp1_, mlp2_;
};

struct Tokens {
  Var t;  ///< [N, M]
  Index h = 0, w = 0;
};

class ClusteringTransformer {
 public:
  ClusteringTransformer() = default;
  ClusteringTransformer(ParameterSet& ps, const std::string& name, const ClusterConfig& cfg, Index feature_channels,
                        std::mt19937_64& rng);

  /// F1 [C, h, w] -> N = h*w tokens of dim M.
  Tokens tokenize(Graph& g, const Var& f1) const;
  /// Centers [K, M] as stored (the parameter itself is [M, K]).
  Var centers(Graph& g) const;
  /// Self-attention over [centers ; tokens]; returns (c_hat [K,M], t_hat [N,M]).
  std::pair<Var, Var> propagate(Graph& g, const Var& centers, const Var& tokens) const;
  /// A [K, N], softmax over centers of (c_hat Wq)(t_hat Wk)^T.
  Var group(Graph& g, const Var& c_hat, const Var& t_hat) const;
  /// c_tilde [K, M] = A (t_hat Wv).
  Var update_centers(Graph& g, const Var& a, const Var& t_hat) const;
  /// r_j = t_hat_j + MLP(sum_i A_ij c_tilde_i), reshaped to [M, h, w].
  Var reconstruct(Graph& g, const Var& a, const Var& c_tilde, const Tokens& t_hat) const;

  struct Output {
    Var feature;  ///< [M, h, w]
    Var similarity;  ///< [K, N]
  };
  Output operator()(Graph& g, const Var& f1) const;

  Parameter& center_parameter() const { return *centers_; }
  Parameter& wq() const { return q_.weight(); }
  Parameter& wk() const { return k_.weight(); }
  Parameter& wv() const { return v_.weight(); }
  Parameter& mlp_out() const { return mlp2_.weight(); }
  Parameter& mlp_out_bias() const { return *mlp2_.bias(); }
  const ClusterConfig& config() const { return cfg_; }

 private:
  ClusterConfig cfg_;
  Parameter* centers_ = nullptr;
  Linear token_proj_;
  std::vector<TransformerLayer> layers_;
  Linear q_, k_, v_;
  Linear mlp1_, mlp2_;
};

/// conv3x3 -> relu -> conv3x3 to K channels, softmax over channels.
class DepthHead {
 public:
  DepthHead() = default;
  DepthHead(ParameterSet& ps, const std::string& name, Index in, Index hidden, Index k, std::mt19937_64& rng);
  Var operator()(Graph& g, const Var& feature) const;

  Parameter& final_weight() const { return conv2_.weight(); }
  Parameter& final_bias() const { return conv2_.bias(); }

 private:
  Conv2d conv1_, conv2_;
};

}  // namespace clude
