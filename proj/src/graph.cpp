#include "clude/graph.hpp"

namespace clude {

Var Graph::push(Node n) {
  if (check_finite_ && !n.value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + n.op);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

void Graph::check_owner(const Var& v, const char* what) const {
  if (!v.valid() || v.graph() != this || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw ContractViolation(std::string(what) + ": variable was not recorded on this graph");
  }
}

Var Graph::constant(NdArray value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(NdArray value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  const bool trainable = grad_enabled_ && !p.frozen();
  Node n;
  n.op = "parameter";
  n.value = p.value();
  n.requires_grad = trainable;
  n.param = trainable ? &p : nullptr;
  return push(std::move(n));
}

Var Graph::record(const char* op, NdArray value, std::initializer_list<Var> parents, Backprop fn) {
  return record(op, std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Graph::record(const char* op, NdArray value, const std::vector<Var>& parents, Backprop fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const Var& p : parents) {
    check_owner(p, op);
    n.requires_grad = n.requires_grad || requires_grad(p.id());
  }
  if (n.requires_grad) n.backprop = std::move(fn);
  return push(std::move(n));
}

const NdArray& Graph::value(const Var& v) const {
  check_owner(v, "value");
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

NdArray Graph::grad(const Var& v) const {
  check_owner(v, "grad");
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.grad.empty() ? NdArray::zeros_like(n.value) : n.grad;
}

NdArray& Graph::grad_buffer(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = NdArray::zeros_like(n.value);
  return n.grad;
}

void Graph::backward(const Var& out) {
  if (!out.valid()) throw ContractViolation("backward: called before any forward pass produced an output");
  check_owner(out, "backward");
  if (value(out).size() != 1) {
    throw ContractViolation("backward: output must be scalar, got shape " + shape_string(value(out).shape()));
  }
  for (Node& n : nodes_) n.grad = NdArray();
  grad_buffer(out.id()).values().setOnes();
  for (std::int32_t id = out.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.requires_grad) continue;
    // Closures write only into parent buffers; node storage is not reallocated here.
    if (n.backprop) n.backprop(*this, n.grad);
    if (n.param != nullptr) n.param->grad().values() += n.grad.values();
  }
}

}  // namespace clude
