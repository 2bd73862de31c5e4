#include "clude/ops.hpp"

#include "clude/kernels.hpp"

#include <cmath>
#include <string>

namespace clude {
namespace {

Graph& graph_of(const Var& v, const char* op) {
  if (!v.valid()) throw ContractViolation(std::string(op) + ": argument is not a recorded variable");
  return *v.graph();
}

/// Runs `f(buffer)` on the gradient buffer of `v` when it needs a gradient.
template <typename F>
void accumulate(Graph& g, std::int32_t id, F&& f) {
  if (g.requires_grad(id)) f(g.grad_buffer(id));
}

template <typename Fwd, typename Dfdx>
Var unary(const char* op, const Var& x, Fwd fwd, Dfdx dfdx) {
  Graph& g = graph_of(x, op);
  NdArray y(x.shape());
  y.values() = x.value().values().unaryExpr(fwd);
  const std::int32_t xi = x.id();
  return g.record(op, std::move(y), {x}, [xi, dfdx](Graph& gr, const NdArray& dy) {
    accumulate(gr, xi, [&](NdArray& dx) {
      const auto& xv = gr.value(xi).values();
      dx.values() += dy.values() * xv.unaryExpr(dfdx);
    });
  });
}

void check_axis(const char* op, const Var& x, int axis) {
  if (axis < 0 || axis >= x.value().rank()) {
    throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(x.shape()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.shape(), b.shape());
  NdArray y(a.shape());
  y.values() = a.value().values() + b.value().values();
  const auto ai = a.id(), bi = b.id();
  return graph_of(a, "add").record("add", std::move(y), {a, b}, [ai, bi](Graph& g, const NdArray& dy) {
    accumulate(g, ai, [&](NdArray& d) { d.values() += dy.values(); });
    accumulate(g, bi, [&](NdArray& d) { d.values() += dy.values(); });
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.shape(), b.shape());
  NdArray y(a.shape());
  y.values() = a.value().values() - b.value().values();
  const auto ai = a.id(), bi = b.id();
  return graph_of(a, "sub").record("sub", std::move(y), {a, b}, [ai, bi](Graph& g, const NdArray& dy) {
    accumulate(g, ai, [&](NdArray& d) { d.values() += dy.values(); });
    accumulate(g, bi, [&](NdArray& d) { d.values() -= dy.values(); });
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a.shape(), b.shape());
  NdArray y(a.shape());
  y.values() = a.value().values() * b.value().values();
  const auto ai = a.id(), bi = b.id();
  return graph_of(a, "mul").record("mul", std::move(y), {a, b}, [ai, bi](Graph& g, const NdArray& dy) {
    accumulate(g, ai, [&](NdArray& d) { d.values() += dy.values() * g.value(bi).values(); });
    accumulate(g, bi, [&](NdArray& d) { d.values() += dy.values() * g.value(ai).values(); });
  });
}

Var minimum(const Var& a, const Var& b) {
  require_same_shape("minimum", a.shape(), b.shape());
  NdArray y(a.shape());
  y.values() = a.value().values().min(b.value().values());
  const auto ai = a.id(), bi = b.id();
  return graph_of(a, "minimum").record("minimum", std::move(y), {a, b}, [ai, bi](Graph& g, const NdArray& dy) {
    // Ties route the gradient to the first argument.
    const auto pick_a = (g.value(ai).values() <= g.value(bi).values()).template cast<double>();
    accumulate(g, ai, [&](NdArray& d) { d.values() += dy.values() * pick_a; });
    accumulate(g, bi, [&](NdArray& d) { d.values() += dy.values() * (1.0 - pick_a); });
  });
}

Var scale(const Var& x, double c) {
  NdArray y(x.shape());
  y.values() = x.value().values() * c;
  const auto xi = x.id();
  return graph_of(x, "scale").record("scale", std::move(y), {x}, [xi, c](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) { d.values() += c * dy.values(); });
  });
}

Var add_scalar(const Var& x, double c) {
  NdArray y(x.shape());
  y.values() = x.value().values() + c;
  const auto xi = x.id();
  return graph_of(x, "add_scalar").record("add_scalar", std::move(y), {x}, [xi](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) { d.values() += dy.values(); });
  });
}

Var relu(const Var& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double v) {
                 const double t = std::tanh(v);
                 return 1.0 - t * t;
               });
}

Var exp(const Var& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var abs(const Var& x) {
  return unary("abs", x, [](double v) { return std::abs(v); },
               [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var log_clamped(const Var& x, double floor) {
  return unary("log", x, [floor](double v) { return std::log(std::max(v, floor)); },
               [floor](double v) { return v > floor ? 1.0 / v : 0.0; });
}

Var sum(const Var& x) {
  NdArray y(Shape{1}, {x.value().values().sum()});
  const auto xi = x.id();
  return graph_of(x, "sum").record("sum", std::move(y), {x}, [xi](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) { d.values() += dy[0]; });
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_axis(const Var& x, int axis) {
  check_axis("sum_axis", x, axis);
  const auto v = kernels::axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = 1;
  NdArray y(out_shape);
  const double* xv = x.value().data();
  for (Index o = 0; o < v.outer; ++o)
    for (Index i = 0; i < v.n; ++i)
      for (Index in = 0; in < v.inner; ++in) y[o * v.inner + in] += xv[(o * v.n + i) * v.inner + in];
  const auto xi = x.id();
  return graph_of(x, "sum_axis").record("sum_axis", std::move(y), {x}, [xi, v](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) {
      for (Index o = 0; o < v.outer; ++o)
        for (Index i = 0; i < v.n; ++i)
          for (Index in = 0; in < v.inner; ++in) d[(o * v.n + i) * v.inner + in] += dy[o * v.inner + in];
    });
  });
}

Var expand_axis(const Var& x, int axis, Index n) {
  check_axis("expand_axis", x, axis);
  if (x.dim(axis) != 1) {
    throw ContractViolation("expand_axis: axis " + std::to_string(axis) + " of " + shape_string(x.shape()) +
                            " is not a singleton");
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = n;
  const auto v = kernels::axis_view(out_shape, axis);
  NdArray y(out_shape);
  const double* xv = x.value().data();
  for (Index o = 0; o < v.outer; ++o)
    for (Index i = 0; i < v.n; ++i)
      for (Index in = 0; in < v.inner; ++in) y[(o * v.n + i) * v.inner + in] = xv[o * v.inner + in];
  const auto xi = x.id();
  return graph_of(x, "expand_axis").record("expand_axis", std::move(y), {x}, [xi, v](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) {
      for (Index o = 0; o < v.outer; ++o)
        for (Index i = 0; i < v.n; ++i)
          for (Index in = 0; in < v.inner; ++in) d[o * v.inner + in] += dy[(o * v.n + i) * v.inner + in];
    });
  });
}

Var add_bias(const Var& x, const Var& b, int axis) {
  check_axis("add_bias", x, axis);
  if (b.value().size() != x.dim(axis)) {
    throw ContractViolation("add_bias: bias " + shape_string(b.shape()) + " does not match axis " +
                            std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  const auto v = kernels::axis_view(x.shape(), axis);
  NdArray y = x.value();
  const double* bv = b.value().data();
  for (Index o = 0; o < v.outer; ++o)
    for (Index i = 0; i < v.n; ++i) y.values().segment((o * v.n + i) * v.inner, v.inner) += bv[i];
  const auto xi = x.id(), bi = b.id();
  return graph_of(x, "add_bias").record("add_bias", std::move(y), {x, b}, [xi, bi, v](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) { d.values() += dy.values(); });
    accumulate(g, bi, [&](NdArray& d) {
      for (Index o = 0; o < v.outer; ++o)
        for (Index i = 0; i < v.n; ++i) d[i] += dy.values().segment((o * v.n + i) * v.inner, v.inner).sum();
    });
  });
}

Var softmax(const Var& x, int axis) {
  check_axis("softmax", x, axis);
  const auto v = kernels::axis_view(x.shape(), axis);
  NdArray y(x.shape());
  kernels::softmax(x.value().data(), v, y.data());
  const auto xi = x.id();
  Graph& g = graph_of(x, "softmax");
  const std::int32_t yi = static_cast<std::int32_t>(g.size());
  return g.record("softmax", std::move(y), {x}, [xi, yi, v](Graph& gr, const NdArray& dy) {
    accumulate(gr, xi, [&](NdArray& d) { kernels::softmax_adjoint(gr.value(yi).data(), dy.data(), v, d.data()); });
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ContractViolation("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                            shape_string(b.shape()));
  }
  NdArray y(Shape{a.dim(0), b.dim(1)});
  y.matrix().noalias() = a.value().matrix() * b.value().matrix();
  const auto ai = a.id(), bi = b.id();
  return graph_of(a, "matmul").record("matmul", std::move(y), {a, b}, [ai, bi](Graph& g, const NdArray& dy) {
    accumulate(g, ai, [&](NdArray& d) { d.matrix().noalias() += dy.matrix() * g.value(bi).matrix().transpose(); });
    accumulate(g, bi, [&](NdArray& d) { d.matrix().noalias() += g.value(ai).matrix().transpose() * dy.matrix(); });
  });
}

Var transpose(const Var& a) {
  if (a.value().rank() != 2) throw ContractViolation("transpose: expected rank 2, got " + shape_string(a.shape()));
  NdArray y(Shape{a.dim(1), a.dim(0)});
  y.matrix() = a.value().matrix().transpose();
  const auto ai = a.id();
  return graph_of(a, "transpose").record("transpose", std::move(y), {a}, [ai](Graph& g, const NdArray& dy) {
    accumulate(g, ai, [&](NdArray& d) { d.matrix() += dy.matrix().transpose(); });
  });
}

Var reshape(const Var& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw ContractViolation("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  NdArray y(std::move(shape), x.value().values());
  const auto xi = x.id();
  return graph_of(x, "reshape").record("reshape", std::move(y), {x}, [xi](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) { d.values() += dy.values(); });
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw ContractViolation("concat: no inputs");
  check_axis("concat", xs.front(), axis);
  Shape out_shape = xs.front().shape();
  Index total = 0;
  for (const Var& x : xs) {
    Shape probe = x.shape();
    probe[static_cast<std::size_t>(axis)] = out_shape[static_cast<std::size_t>(axis)];
    if (probe != out_shape) {
      throw ContractViolation("concat: shape mismatch " + shape_string(xs.front().shape()) + " vs " +
                              shape_string(x.shape()));
    }
    total += x.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  const auto vo = kernels::axis_view(out_shape, axis);
  NdArray y(out_shape);
  std::vector<std::pair<std::int32_t, Index>> parts;  // (id, extent)
  Index offset = 0;
  for (const Var& x : xs) {
    const Index n = x.dim(axis);
    const double* xv = x.value().data();
    for (Index o = 0; o < vo.outer; ++o) {
      std::copy(xv + o * n * vo.inner, xv + (o + 1) * n * vo.inner, y.data() + (o * vo.n + offset) * vo.inner);
    }
    parts.emplace_back(x.id(), n);
    offset += n;
  }
  return graph_of(xs.front(), "concat").record("concat", std::move(y), xs, [parts, vo](Graph& g, const NdArray& dy) {
    Index off = 0;
    for (const auto& [id, n] : parts) {
      accumulate(g, id, [&](NdArray& d) {
        for (Index o = 0; o < vo.outer; ++o) {
          d.values().segment(o * n * vo.inner, n * vo.inner) +=
              dy.values().segment((o * vo.n + off) * vo.inner, n * vo.inner);
        }
      });
      off += n;
    }
  });
}

Var slice(const Var& x, int axis, Index start, Index length) {
  check_axis("slice", x, axis);
  if (start < 0 || length <= 0 || start + length > x.dim(axis)) {
    throw ContractViolation("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                            ") outside axis " + std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  const auto vi = kernels::axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  NdArray y(out_shape);
  for (Index o = 0; o < vi.outer; ++o) {
    y.values().segment(o * length * vi.inner, length * vi.inner) =
        x.value().values().segment((o * vi.n + start) * vi.inner, length * vi.inner);
  }
  const auto xi = x.id();
  return graph_of(x, "slice").record("slice", std::move(y), {x}, [xi, vi, start, length](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) {
      for (Index o = 0; o < vi.outer; ++o) {
        d.values().segment((o * vi.n + start) * vi.inner, length * vi.inner) +=
            dy.values().segment(o * length * vi.inner, length * vi.inner);
      }
    });
  });
}

Var conv2d(const Var& x, const Var& w, Index stride) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || ws[2] % 2 == 0 || stride < 1) {
    throw ContractViolation("conv2d: input " + shape_string(xs) + " incompatible with kernel " + shape_string(ws));
  }
  const kernels::ConvGeometry geo{xs[0], xs[1], xs[2], ws[2], stride, ws[2] / 2};
  const Index out_c = ws[0], ho = geo.out_height(), wo = geo.out_width();
  const RowMatrix<double> cols = kernels::im2col(x.value().data(), geo);
  const Eigen::Map<const RowMatrix<double>> wm(w.value().data(), out_c, ws[1] * ws[2] * ws[3]);
  NdArray y(Shape{out_c, ho, wo});
  Eigen::Map<RowMatrix<double>>(y.data(), out_c, ho * wo).noalias() = wm * cols;
  const auto xi = x.id(), wi = w.id();
  return graph_of(x, "conv2d").record("conv2d", std::move(y), {x, w}, [xi, wi, geo, out_c](Graph& g, const NdArray& dy) {
    const Index k2c = geo.channels * geo.kernel * geo.kernel;
    const Eigen::Map<const RowMatrix<double>> dym(dy.data(), out_c, geo.out_height() * geo.out_width());
    const Eigen::Map<const RowMatrix<double>> wmat(g.value(wi).data(), out_c, k2c);
    accumulate(g, wi, [&](NdArray& d) {
      const RowMatrix<double> c = kernels::im2col(g.value(xi).data(), geo);
      Eigen::Map<RowMatrix<double>>(d.data(), out_c, k2c).noalias() += dym * c.transpose();
    });
    accumulate(g, xi, [&](NdArray& d) {
      const RowMatrix<double> dcols = wmat.transpose() * dym;
      kernels::col2im(dcols, geo, d.data());
    });
  });
}

Var resize_bilinear(const Var& x, Index out_h, Index out_w) {
  if (x.value().rank() != 3 || out_h <= 0 || out_w <= 0) {
    throw ContractViolation("resize_bilinear: expected [C,H,W] input, got " + shape_string(x.shape()));
  }
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  NdArray y(Shape{c, out_h, out_w});
  kernels::resize_bilinear(x.value().data(), c, h, w, y.data(), out_h, out_w);
  const auto xi = x.id();
  return graph_of(x, "resize").record("resize_bilinear", std::move(y), {x},
                                      [xi, c, h, w, out_h, out_w](Graph& g, const NdArray& dy) {
                                        accumulate(g, xi, [&](NdArray& d) {
                                          kernels::resize_bilinear_adjoint(dy.data(), c, h, w, d.data(), out_h, out_w);
                                        });
                                      });
}

Var adaptive_avg_pool(const Var& x, Index bins) {
  if (x.value().rank() != 3 || bins < 1) {
    throw ContractViolation("adaptive_avg_pool: expected [C,H,W] input, got " + shape_string(x.shape()));
  }
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  NdArray y(Shape{c, bins, bins});
  kernels::adaptive_avg_pool(x.value().data(), c, h, w, bins, y.data());
  const auto xi = x.id();
  return graph_of(x, "pool").record("adaptive_avg_pool", std::move(y), {x}, [xi, c, h, w, bins](Graph& g, const NdArray& dy) {
    accumulate(g, xi, [&](NdArray& d) { kernels::adaptive_avg_pool_adjoint(dy.data(), c, h, w, bins, d.data()); });
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.value().rank() != 2 || gamma.value().size() != x.dim(1) || beta.value().size() != x.dim(1)) {
    throw ContractViolation("layer_norm: input " + shape_string(x.shape()) + " incompatible with affine " +
                            shape_string(gamma.shape()));
  }
  const Index n = x.dim(0), m = x.dim(1);
  NdArray xhat(x.shape());
  Eigen::ArrayXd inv_std(n);
  const auto xm = x.value().matrix().array();
  for (Index r = 0; r < n; ++r) {
    const double mu = xm.row(r).mean();
    const double var = (xm.row(r) - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.matrix().row(r) = ((xm.row(r) - mu) * inv_std[r]).matrix();
  }
  NdArray y(x.shape());
  const Eigen::Map<const Eigen::RowVectorXd> gv(gamma.value().data(), m), bv(beta.value().data(), m);
  for (Index r = 0; r < n; ++r) y.matrix().row(r) = (xhat.matrix().row(r).array() * gv.array() + bv.array()).matrix();
  const auto xi = x.id(), gi = gamma.id(), bi = beta.id();
  return graph_of(x, "layer_norm").record(
      "layer_norm", std::move(y), {x, gamma, beta}, [xi, gi, bi, xhat, inv_std, n, m](Graph& g, const NdArray& dy) {
        const auto dym = dy.matrix();
        accumulate(g, gi, [&](NdArray& d) {
          Eigen::Map<Eigen::RowVectorXd>(d.data(), m) += (dym.array() * xhat.matrix().array()).colwise().sum().matrix();
        });
        accumulate(g, bi, [&](NdArray& d) { Eigen::Map<Eigen::RowVectorXd>(d.data(), m) += dym.colwise().sum(); });
        accumulate(g, xi, [&](NdArray& d) {
          const Eigen::Map<const Eigen::RowVectorXd> gv2(g.value(gi).data(), m);
          for (Index r = 0; r < n; ++r) {
            const Eigen::RowVectorXd dxhat = (dym.row(r).array() * gv2.array()).matrix();
            const Eigen::RowVectorXd xr = xhat.matrix().row(r);
            const double mean_d = dxhat.mean();
            const double mean_dx = (dxhat.array() * xr.array()).mean();
            d.matrix().row(r) += (inv_std[r] * (dxhat.array() - mean_d - xr.array() * mean_dx)).matrix();
          }
        });
      });
}

}  // namespace clude
