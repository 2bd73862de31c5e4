#pragma once

#include "clude/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace clude {

/// A named learnable array with its gradient accumulator.
class Parameter {
 public:
  Parameter(std::string name, NdArray value)
      : name_(std::move(name)), value_(std::move(value)), grad_(NdArray::zeros_like(value_)) {}

  const std::string& name() const { return name_; }
  NdArray& value() { return value_; }
  const NdArray& value() const { return value_; }
  NdArray& grad() { return grad_; }
  const NdArray& grad() const { return grad_; }
  void zero_grad() { grad_.values().setZero(); }

  /// Frozen parameters enter graphs as constants.
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

 private:
  std::string name_;
  NdArray value_;
  NdArray grad_;
  bool frozen_ = false;
};

class Graph;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::int32_t id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr && id_ >= 0; }

  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }
  Index dim(int axis) const { return value().dim(axis); }

 private:
  Graph* graph_ = nullptr;
  std::int32_t id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backpropagation.
///
/// A Graph is single-writer; separate Graph instances may run concurrently
/// as long as they only read shared Parameters.
class Graph {
 public:
  /// Propagates the node's output gradient into its parents' buffers.
  using Backprop = std::function<void(Graph&, const NdArray& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(NdArray value);
  /// Leaf whose gradient is retained (finite-difference checks, inputs of interest).
  Var variable(NdArray value);
  /// Leaf bound to a Parameter; backward() accumulates into Parameter::grad
  /// unless the parameter is frozen.
  Var parameter(Parameter& p);

  /// Used by op implementations. `fn` is dropped when no parent needs a gradient.
  Var record(const char* op, NdArray value, std::initializer_list<Var> parents, Backprop fn);
  Var record(const char* op, NdArray value, const std::vector<Var>& parents, Backprop fn);

  /// Fills gradients of every node reachable from `out`, which must be a scalar.
  void backward(const Var& out);

  const NdArray& value(const Var& v) const;
  const NdArray& value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient of the last backward() target w.r.t. `v`; zeros when unreached.
  NdArray grad(const Var& v) const;

  bool requires_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Lazily zero-initialised gradient accumulator for a node.
  NdArray& grad_buffer(std::int32_t id);

  std::size_t size() const { return nodes_.size(); }

  /// When on, every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }
  /// With gradients disabled every parameter enters as a constant (inference).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

 private:
  struct Node {
    const char* op = "";
    NdArray value;
    NdArray grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node n);
  void check_owner(const Var& v, const char* what) const;

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool check_finite_ =
#ifdef NDEBUG
      false;
#else
      true;
#endif
};

inline const NdArray& Var::value() const {
  if (!valid()) throw ContractViolation("Var: use of an unrecorded variable");
  return graph_->value(*this);
}

}  // namespace clude
