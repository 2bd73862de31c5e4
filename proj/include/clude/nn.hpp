#pragma once

// Parameter registry and the small set of layers the pipeline is built from.

#include "clude/ops.hpp"

#include <deque>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace clude {

/// Owns parameters with stable addresses, in registration order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter& add(std::string name, NdArray value);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(std::string_view prefix);

  void zero_grad();
  Index scalar_count() const;

 private:
  std::deque<Parameter> params_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
NdArray uniform_init(Shape shape, Index fan_in, std::mt19937_64& rng);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet& ps, const std::string& name, Index in, Index out, Index kernel, Index stride,
         std::mt19937_64& rng);
  Var operator()(Graph& g, const Var& x) const;

  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }
  Index out_channels() const { return weight_->value().dim(0); }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  Index stride_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, Index in, Index out, std::mt19937_64& rng, bool bias = true);
  /// x is [N, in]; returns [N, out].
  Var operator()(Graph& g, const Var& x) const;

  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, Index dim);
  Var operator()(Graph& g, const Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

/// Negative slope of the activations in residual blocks and the encoder trunk.
inline constexpr double kLeak = 0.1;

/// conv3x3 -> leaky relu -> conv3x3, plus identity (or 1x1 projection) shortcut, then leaky relu.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet& ps, const std::string& name, Index in, Index out, std::mt19937_64& rng);
  Var operator()(Graph& g, const Var& x) const;

 private:
  Conv2d conv1_, conv2_;
  Conv2d proj_;
  bool has_proj_ = false;
};

}  // namespace clude
