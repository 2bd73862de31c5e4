#pragma once

// Differentiable operations over Graph variables. Every op checks its shape
// preconditions and throws ContractViolation naming the offending shapes.

#include "clude/graph.hpp"

#include <vector>

namespace clude {

// Elementwise arithmetic (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& x) { return scale(x, c); }
inline Var operator*(const Var& x, double c) { return scale(x, c); }
inline Var operator-(const Var& x) { return scale(x, -1.0); }

// Elementwise nonlinearities.
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var tanh(const Var& x);
Var exp(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
/// log(max(x, floor)); zero gradient where clamped.
Var log_clamped(const Var& x, double floor);

// Reductions and broadcasting.
Var sum(const Var& x);
Var mean(const Var& x);
/// Sums over `axis`, keeping it with extent 1.
Var sum_axis(const Var& x, int axis);
/// Repeats a size-1 axis `n` times.
Var expand_axis(const Var& x, int axis, Index n);
/// Adds a vector `b` of length x.dim(axis) along `axis`.
Var add_bias(const Var& x, const Var& b, int axis);
Var softmax(const Var& x, int axis);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Layout.
Var reshape(const Var& x, Shape shape);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(const Var& x, int axis, Index start, Index length);

// Spatial ops on [C,H,W].
/// Same-padded (pad = k/2) convolution; w is [O, C, k, k].
Var conv2d(const Var& x, const Var& w, Index stride = 1);
/// Half-pixel bilinear resize with edge clamping.
Var resize_bilinear(const Var& x, Index out_h, Index out_w);
/// Bilinear 2x upsampling.
inline Var upsample2(const Var& x) { return resize_bilinear(x, x.dim(1) * 2, x.dim(2) * 2); }
Var adaptive_avg_pool(const Var& x, Index bins);

/// Row-wise normalisation of [N, M] with affine gamma/beta of length M.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

}  // namespace clude
