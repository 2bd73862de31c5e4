#pragma once

// Scalar-templated dense kernels shared by the differentiable ops. Each forward
// kernel has a matching adjoint used by the tape.

#include "clude/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace clude::kernels {

struct ConvGeometry {
  Index channels, height, width;
  Index kernel, stride, pad;
  Index out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  Index out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

/// Unfolds [C,H,W] into [C*k*k, Ho*Wo] columns (zero padding).
template <typename T>
RowMatrix<T> im2col(const T* x, const ConvGeometry& g) {
  const Index ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  RowMatrix<T> cols(g.channels * k * k, ho * wo);
  for (Index c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        T* row = cols.row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters columns back onto [C,H,W] (accumulating).
template <typename T>
void col2im(const RowMatrix<T>& cols, const ConvGeometry& g, T* dx) {
  const Index ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (Index c = 0; c < g.channels; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const T* row = cols.row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + iy * g.width;
          const T* src = row + oy * wo;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// One output coordinate of a 1-D linear resize: two taps and their weights.
struct LinearTap {
  Index lo, hi;
  double w_lo, w_hi;
};

/// Half-pixel (align-corners-false) source taps with edge clamping.
inline std::vector<LinearTap> linear_taps(Index in, Index out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::max(src, 0.0);
    Index lo = std::min(static_cast<Index>(std::floor(src)), in - 1);
    Index hi = std::min(lo + 1, in - 1);
    double frac = src - static_cast<double>(lo);
    if (hi == lo) frac = 0.0;
    taps[static_cast<std::size_t>(o)] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

template <typename T>
void resize_bilinear(const T* x, Index c, Index h, Index w, T* y, Index oh, Index ow) {
  const auto ty = linear_taps(h, oh), tx = linear_taps(w, ow);
  for (Index ch = 0; ch < c; ++ch) {
    const T* src = x + ch * h * w;
    T* dst = y + ch * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T* r0 = src + a.lo * w;
      const T* r1 = src + a.hi * w;
      for (Index ox = 0; ox < ow; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        dst[oy * ow + ox] = static_cast<T>(a.w_lo * (b.w_lo * r0[b.lo] + b.w_hi * r0[b.hi]) +
                                           a.w_hi * (b.w_lo * r1[b.lo] + b.w_hi * r1[b.hi]));
      }
    }
  }
}

template <typename T>
void resize_bilinear_adjoint(const T* dy, Index c, Index h, Index w, T* dx, Index oh, Index ow) {
  const auto ty = linear_taps(h, oh), tx = linear_taps(w, ow);
  for (Index ch = 0; ch < c; ++ch) {
    const T* src = dy + ch * oh * ow;
    T* dst = dx + ch * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      for (Index ox = 0; ox < ow; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T g = src[oy * ow + ox];
        dst[a.lo * w + b.lo] += static_cast<T>(a.w_lo * b.w_lo * g);
        dst[a.lo * w + b.hi] += static_cast<T>(a.w_lo * b.w_hi * g);
        dst[a.hi * w + b.lo] += static_cast<T>(a.w_hi * b.w_lo * g);
        dst[a.hi * w + b.hi] += static_cast<T>(a.w_hi * b.w_hi * g);
      }
    }
  }
}

/// Cell bounds of adaptive average pooling; valid for any bin count >= 1.
inline std::pair<Index, Index> adaptive_cell(Index i, Index extent, Index bins) {
  const Index start = (i * extent) / bins;
  const Index end = ((i + 1) * extent + bins - 1) / bins;
  return {start, end};
}

template <typename T>
void adaptive_avg_pool(const T* x, Index c, Index h, Index w, Index bins, T* y) {
  for (Index ch = 0; ch < c; ++ch) {
    for (Index by = 0; by < bins; ++by) {
      const auto [y0, y1] = adaptive_cell(by, h, bins);
      for (Index bx = 0; bx < bins; ++bx) {
        const auto [x0, x1] = adaptive_cell(bx, w, bins);
        T acc = T(0);
        for (Index iy = y0; iy < y1; ++iy)
          for (Index ix = x0; ix < x1; ++ix) acc += x[(ch * h + iy) * w + ix];
        y[(ch * bins + by) * bins + bx] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool_adjoint(const T* dy, Index c, Index h, Index w, Index bins, T* dx) {
  for (Index ch = 0; ch < c; ++ch) {
    for (Index by = 0; by < bins; ++by) {
      const auto [y0, y1] = adaptive_cell(by, h, bins);
      for (Index bx = 0; bx < bins; ++bx) {
        const auto [x0, x1] = adaptive_cell(bx, w, bins);
        const T g = dy[(ch * bins + by) * bins + bx] / static_cast<T>((y1 - y0) * (x1 - x0));
        for (Index iy = y0; iy < y1; ++iy)
          for (Index ix = x0; ix < x1; ++ix) dx[(ch * h + iy) * w + ix] += g;
      }
    }
  }
}

/// View of a tensor around one axis as [outer, n, inner].
struct AxisView {
  Index outer, n, inner;
};

inline AxisView axis_view(const Shape& s, int axis) {
  AxisView v{1, s.at(static_cast<std::size_t>(axis)), 1};
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

template <typename T>
void softmax(const T* x, const AxisView& v, T* y) {
  for (Index o = 0; o < v.outer; ++o) {
    for (Index in = 0; in < v.inner; ++in) {
      const Index base = o * v.n * v.inner + in;
      T m = x[base];
      for (Index i = 1; i < v.n; ++i) m = std::max(m, x[base + i * v.inner]);
      T sum = T(0);
      for (Index i = 0; i < v.n; ++i) {
        const T e = std::exp(x[base + i * v.inner] - m);
        y[base + i * v.inner] = e;
        sum += e;
      }
      for (Index i = 0; i < v.n; ++i) y[base + i * v.inner] /= sum;
    }
  }
}

/// dx_i = y_i (dy_i - sum_j y_j dy_j)
template <typename T>
void softmax_adjoint(const T* y, const T* dy, const AxisView& v, T* dx) {
  for (Index o = 0; o < v.outer; ++o) {
    for (Index in = 0; in < v.inner; ++in) {
      const Index base = o * v.n * v.inner + in;
      T dot = T(0);
      for (Index i = 0; i < v.n; ++i) dot += y[base + i * v.inner] * dy[base + i * v.inner];
      for (Index i = 0; i < v.n; ++i) {
        const Index k = base + i * v.inner;
        dx[k] += y[k] * (dy[k] - dot);
      }
    }
  }
}

}  // namespace clude::kernels
