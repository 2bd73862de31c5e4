#include "clude/nn.hpp"

#include <cmath>

namespace clude {

Parameter& ParameterSet::add(std::string name, NdArray value) {
  if (find(name) != nullptr) throw ContractViolation("ParameterSet: duplicate parameter name " + name);
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter* ParameterSet::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name() == name) return &p;
  return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name() == name) return &p;
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterSet::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p.name().starts_with(prefix)) out.push_back(&p);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.value().size();
  return n;
}

NdArray uniform_init(Shape shape, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  NdArray t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, Index in, Index out, Index kernel, Index stride,
               std::mt19937_64& rng)
    : weight_(&ps.add(name + ".w", uniform_init({out, in, kernel, kernel}, in * kernel * kernel, rng))),
      bias_(&ps.add(name + ".b", NdArray({out}))),
      stride_(stride) {}

Var Conv2d::operator()(Graph& g, const Var& x) const {
  return add_bias(conv2d(x, g.parameter(*weight_), stride_), g.parameter(*bias_), 0);
}

Linear::Linear(ParameterSet& ps, const std::string& name, Index in, Index out, std::mt19937_64& rng, bool bias)
    : weight_(&ps.add(name + ".w", uniform_init({in, out}, in, rng))),
      bias_(bias ? &ps.add(name + ".b", NdArray({out})) : nullptr) {}

Var Linear::operator()(Graph& g, const Var& x) const {
  Var y = matmul(x, g.parameter(*weight_));
  return bias_ ? add_bias(y, g.parameter(*bias_), 1) : y;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, Index dim)
    : gamma_(&ps.add(name + ".gamma", NdArray({dim}, 1.0))), beta_(&ps.add(name + ".beta", NdArray({dim}))) {}

Var LayerNorm::operator()(Graph& g, const Var& x) const {
  return layer_norm(x, g.parameter(*gamma_), g.parameter(*beta_));
}

ResidualBlock::ResidualBlock(ParameterSet& ps, const std::string& name, Index in, Index out, std::mt19937_64& rng)
    : conv1_(ps, name + ".c1", in, out, 3, 1, rng), conv2_(ps, name + ".c2", out, out, 3, 1, rng), has_proj_(in != out) {
  if (has_proj_) proj_ = Conv2d(ps, name + ".proj", in, out, 1, 1, rng);
}

Var ResidualBlock::operator()(Graph& g, const Var& x) const {
  Var h = conv2_(g, leaky_relu(conv1_(g, x), kLeak));
  Var skip = has_proj_ ? proj_(g, x) : x;
  return leaky_relu(h + skip, kLeak);
}

}  // namespace clude
