#pragma once

#include "clude/errors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace clude {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline Index shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major n-dimensional array. Feature maps are laid out [C, H, W],
/// token sequences [N, M].
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape();
    values_ = Storage::Constant(shape_size(shape_), fill);
  }

  Tensor(Shape shape, Storage values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_size(shape_)) {
      throw ContractViolation("Tensor: value count " + std::to_string(values_.size()) +
                              " does not match shape " + shape_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<T> values) : shape_(std::move(shape)) {
    check_shape();
    values_.resize(static_cast<Index>(values.size()));
    Index i = 0;
    for (T v : values) values_[i++] = v;
    if (values_.size() != shape_size(shape_)) {
      throw ContractViolation("Tensor: value count " + std::to_string(values_.size()) +
                              " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return values_.size(); }
  bool empty() const { return shape_.empty(); }

  Storage& values() { return values_; }
  const Storage& values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }

  T& operator[](Index i) { return values_[i]; }
  T operator[](Index i) const { return values_[i]; }

  T& at(Index c, Index y, Index x) { return values_[(c * shape_[1] + y) * shape_[2] + x]; }
  T at(Index c, Index y, Index x) const { return values_[(c * shape_[1] + y) * shape_[2] + x]; }
  T& at(Index r, Index c) { return values_[r * shape_[1] + c]; }
  T at(Index r, Index c) const { return values_[r * shape_[1] + c]; }

  /// Row-major matrix view: rank-2 tensors map directly, [C,H,W] maps to C x (H*W).
  Eigen::Map<RowMatrix<T>> matrix() {
    return Eigen::Map<RowMatrix<T>>(values_.data(), shape_.front(), size() / shape_.front());
  }
  Eigen::Map<const RowMatrix<T>> matrix() const {
    return Eigen::Map<const RowMatrix<T>>(values_.data(), shape_.front(), size() / shape_.front());
  }

  /// Same values, new shape of equal element count.
  Tensor reshaped(Shape s) const { return Tensor(std::move(s), values_); }

  bool all_finite() const { return values_.isFinite().all(); }

 private:
  void check_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw ContractViolation("Tensor: non-positive extent in shape " + shape_string(shape_));
    }
  }

  Shape shape_;
  Storage values_;
};

using NdArray = Tensor<double>;

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                            shape_string(b));
  }
}

}  // namespace clude
