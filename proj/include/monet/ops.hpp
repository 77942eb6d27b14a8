#pragma once

// Differentiable tensor operations used by the attention network and the
// component VAE. Every op records a closure that maps the output gradient to
// its inputs' gradients; heavy lifting (convolutions, dense layers) goes
// through Eigen GEMM on im2col buffers.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "monet/autograd.hpp"

namespace monet {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
  if (s.size() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(s));
  }
}

struct ConvGeom {
  Index channels, height, width, kernel, stride, pad, out_h, out_w;
  Index patch() const { return channels * kernel * kernel; }
  Index pixels() const { return out_h * out_w; }
  bool pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

// cols[(c*k + ki)*k + kj][oh*out_w + ow] = x[c][oh*s - p + ki][ow*s - p + kj]
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const Index npix = g.pixels();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kernel; ++ki) {
      for (Index kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * npix;
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.pad + ki;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = x + (c * g.height + ih) * g.width;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
  const Index npix = g.pixels();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kernel; ++ki) {
      for (Index kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * npix;
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.height) continue;
          T* dst = dx + (c * g.height + ih) * g.width;
          const T* src = row + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Index conv_out_size(Index in, Index kernel, Index stride, Index pad) {
  const Index span = in + 2 * pad - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

// 2-d cross-correlation. x: [N,C,H,W], w: [O,C,k,k], bias: [O] or empty Var.
template <typename T>
Var<T> conv2d(Tape<T>& tape, Var<T> x, Var<T> w, Var<T> bias, Index stride, Index pad) {
  detail::require_rank(x.shape(), 4, "conv2d input");
  detail::require_rank(w.shape(), 4, "conv2d weight");
  const Index n = x.dim(0), out_c = w.dim(0), k = w.dim(2);
  if (w.dim(1) != x.dim(1) || w.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias && bias.value().numel() != out_c) {
    throw ShapeError("conv2d: bias size " + std::to_string(bias.value().numel()) +
                     " != output channels " + std::to_string(out_c));
  }
  detail::ConvGeom g{x.dim(1), x.dim(2), x.dim(3), k, stride, pad,
                     conv_out_size(x.dim(2), k, stride, pad), conv_out_size(x.dim(3), k, stride, pad)};
  if (g.out_h < 1 || g.out_w < 1) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " too small for kernel " +
                     std::to_string(k));
  }
  Tensor<T> out({n, out_c, g.out_h, g.out_w});
  AlignedVector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.patch() * g.pixels()));
  detail::ConstMatMap<T> wm(w.value().data(), out_c, g.patch());
  for (Index i = 0; i < n; ++i) {
    const T* xi = x.value().data() + i * g.channels * g.height * g.width;
    const T* colp = xi;
    if (!g.pointwise()) {
      detail::im2col(xi, g, cols.data());
      colp = cols.data();
    }
    detail::MatMap<T> om(out.data() + i * out_c * g.pixels(), out_c, g.pixels());
    om.noalias() = wm * detail::ConstMatMap<T>(colp, g.patch(), g.pixels());
    if (bias) {
      for (Index o = 0; o < out_c; ++o) om.row(o).array() += bias.value()[o];
    }
  }
  return tape.record(std::move(out), {x, w, bias ? bias : x}, [=](Node<T>* self) {
    return [=]() {
      const Tensor<T>& gout = self->grad;
      AlignedVector<T> buf(g.pointwise() ? 0 : static_cast<std::size_t>(g.patch() * g.pixels()));
      AlignedVector<T> dcols(static_cast<std::size_t>(g.patch() * g.pixels()));
      detail::ConstMatMap<T> wmat(w.value().data(), out_c, g.patch());
      for (Index i = 0; i < n; ++i) {
        detail::ConstMatMap<T> go(gout.data() + i * out_c * g.pixels(), out_c, g.pixels());
        if (wants_grad(w)) {
          const T* xi = x.value().data() + i * g.channels * g.height * g.width;
          const T* colp = xi;
          if (!g.pointwise()) {
            detail::im2col(xi, g, buf.data());
            colp = buf.data();
          }
          detail::MatMap<T> dw(w.node()->grad_buffer().data(), out_c, g.patch());
          dw.noalias() += go * detail::ConstMatMap<T>(colp, g.patch(), g.pixels()).transpose();
        }
        if (bias && wants_grad(bias)) {
          T* db = bias.node()->grad_buffer().data();
          for (Index o = 0; o < out_c; ++o) db[o] += go.row(o).sum();
        }
        if (wants_grad(x)) {
          T* dx = x.node()->grad_buffer().data() + i * g.channels * g.height * g.width;
          if (g.pointwise()) {
            detail::MatMap<T> dxm(dx, g.channels, g.pixels());
            dxm.noalias() += wmat.transpose() * go;
          } else {
            detail::MatMap<T> dc(dcols.data(), g.patch(), g.pixels());
            dc.noalias() = wmat.transpose() * go;
            detail::col2im_add(dcols.data(), g, dx);
          }
        }
      }
    };
  });
}

// Dense layer. x: [N,In], w: [Out,In], bias: [Out] or empty Var.
template <typename T>
Var<T> linear(Tape<T>& tape, Var<T> x, Var<T> w, Var<T> bias) {
  detail::require_rank(x.shape(), 2, "linear input");
  detail::require_rank(w.shape(), 2, "linear weight");
  const Index n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeError("linear: weight " + shape_str(w.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias && bias.value().numel() != out_dim) throw ShapeError("linear: bias size mismatch");
  Tensor<T> out({n, out_dim});
  detail::MatMap<T> om(out.data(), n, out_dim);
  om.noalias() = detail::ConstMatMap<T>(x.value().data(), n, in) *
                 detail::ConstMatMap<T>(w.value().data(), out_dim, in).transpose();
  if (bias) {
    for (Index i = 0; i < n; ++i) {
      for (Index o = 0; o < out_dim; ++o) om(i, o) += bias.value()[o];
    }
  }
  return tape.record(std::move(out), {x, w, bias ? bias : x}, [=](Node<T>* self) {
    return [=]() {
      detail::ConstMatMap<T> go(self->grad.data(), n, out_dim);
      if (wants_grad(w)) {
        detail::MatMap<T>(w.node()->grad_buffer().data(), out_dim, in).noalias() +=
            go.transpose() * detail::ConstMatMap<T>(x.value().data(), n, in);
      }
      if (bias && wants_grad(bias)) {
        T* db = bias.node()->grad_buffer().data();
        for (Index o = 0; o < out_dim; ++o) db[o] += go.col(o).sum();
      }
      if (wants_grad(x)) {
        detail::MatMap<T>(x.node()->grad_buffer().data(), n, in).noalias() +=
            go * detail::ConstMatMap<T>(w.value().data(), out_dim, in);
      }
    };
  });
}

template <typename T>
Var<T> relu(Tape<T>& tape, Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = v > T{0} ? v : T{0};
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      const T* y = self->value.data();
      const T* g = self->grad.data();
      for (Index i = 0; i < self->value.numel(); ++i) {
        if (y[i] > T{0}) dx[i] += g[i];
      }
    };
  });
}

// Per-sample, per-channel normalisation over spatial positions followed by a
// learned per-channel bias (no learned scale).
template <typename T>
Var<T> instance_norm(Tape<T>& tape, Var<T> x, Var<T> bias, T eps = T(1e-5)) {
  detail::require_rank(x.shape(), 4, "instance_norm");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (bias.value().numel() != c) throw ShapeError("instance_norm: bias size mismatch");
  Tensor<T> out(x.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(n * c));
  for (Index i = 0; i < n * c; ++i) {
    const T* src = x.value().data() + i * hw;
    T* dst = out.data() + i * hw;
    T mean{0};
    for (Index p = 0; p < hw; ++p) mean += src[p];
    mean /= static_cast<T>(hw);
    T var{0};
    for (Index p = 0; p < hw; ++p) var += (src[p] - mean) * (src[p] - mean);
    var /= static_cast<T>(hw);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    const T b = bias.value()[i % c];
    for (Index p = 0; p < hw; ++p) dst[p] = (src[p] - mean) * is + b;
  }
  return tape.record(std::move(out), {x, bias}, [=](Node<T>* self) {
    return [=]() {
      for (Index i = 0; i < n * c; ++i) {
        const T* g = self->grad.data() + i * hw;
        const T* y = self->value.data() + i * hw;
        const T b = bias.value()[i % c];
        T gsum{0}, gxhat{0};
        for (Index p = 0; p < hw; ++p) {
          gsum += g[p];
          gxhat += g[p] * (y[p] - b);
        }
        if (wants_grad(bias)) bias.node()->grad_buffer()[i % c] += gsum;
        if (wants_grad(x)) {
          T* dx = x.node()->grad_buffer().data() + i * hw;
          const T is = inv_std[static_cast<std::size_t>(i)];
          const T gm = gsum / static_cast<T>(hw), gx = gxhat / static_cast<T>(hw);
          for (Index p = 0; p < hw; ++p) dx[p] += is * (g[p] - gm - (y[p] - b) * gx);
        }
      }
    };
  });
}

// Nearest-neighbour halving: out[h][w] = in[2h][2w].
template <typename T>
Var<T> downsample2(Tape<T>& tape, Var<T> x) {
  detail::require_rank(x.shape(), 4, "downsample2");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("downsample2: odd spatial size " + shape_str(x.shape()));
  const Index oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  for (Index p = 0; p < n * c; ++p) {
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        out[(p * oh + i) * ow + j] = x.value()[(p * h + 2 * i) * w + 2 * j];
      }
    }
  }
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      for (Index p = 0; p < n * c; ++p) {
        for (Index i = 0; i < oh; ++i) {
          for (Index j = 0; j < ow; ++j) {
            dx[(p * h + 2 * i) * w + 2 * j] += self->grad[(p * oh + i) * ow + j];
          }
        }
      }
    };
  });
}

// Nearest-neighbour doubling: out[h][w] = in[h/2][w/2].
template <typename T>
Var<T> upsample2(Tape<T>& tape, Var<T> x) {
  detail::require_rank(x.shape(), 4, "upsample2");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = h * 2, ow = w * 2;
  Tensor<T> out({n, c, oh, ow});
  for (Index p = 0; p < n * c; ++p) {
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        out[(p * oh + i) * ow + j] = x.value()[(p * h + i / 2) * w + j / 2];
      }
    }
  }
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      for (Index p = 0; p < n * c; ++p) {
        for (Index i = 0; i < oh; ++i) {
          for (Index j = 0; j < ow; ++j) {
            dx[(p * h + i / 2) * w + j / 2] += self->grad[(p * oh + i) * ow + j];
          }
        }
      }
    };
  });
}

// Concatenate rank-4 tensors along the channel axis, in argument order.
template <typename T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts.front().shape();
  detail::require_rank(s0, 4, "concat_channels");
  Index total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: incompatible shapes " + shape_str(s0) + " and " +
                       shape_str(s));
    }
    total_c += s[1];
  }
  const Index n = s0[0], hw = s0[2] * s0[3];
  Tensor<T> out({n, total_c, s0[2], s0[3]});
  for (Index i = 0; i < n; ++i) {
    T* dst = out.data() + i * total_c * hw;
    for (const auto& p : parts) {
      const Index block = p.dim(1) * hw;
      std::copy_n(p.value().data() + i * block, block, dst);
      dst += block;
    }
  }
  return tape.record(std::move(out), parts, [=](Node<T>* self) {
    return [=]() {
      for (Index i = 0; i < n; ++i) {
        const T* src = self->grad.data() + i * total_c * hw;
        for (const auto& p : parts) {
          const Index block = p.dim(1) * hw;
          if (wants_grad(p)) {
            T* dx = p.node()->grad_buffer().data() + i * block;
            for (Index q = 0; q < block; ++q) dx[q] += src[q];
          }
          src += block;
        }
      }
    };
  });
}

template <typename T>
Var<T> reshape(Tape<T>& tape, Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      for (Index i = 0; i < self->value.numel(); ++i) dx[i] += self->grad[i];
    };
  });
}

// Columns [start, start+len) of a rank-2 tensor.
template <typename T>
Var<T> slice_cols(Tape<T>& tape, Var<T> x, Index start, Index len) {
  detail::require_rank(x.shape(), 2, "slice_cols");
  const Index n = x.dim(0), d = x.dim(1);
  if (start < 0 || len < 0 || start + len > d) throw ShapeError("slice_cols: range out of bounds");
  Tensor<T> out({n, len});
  for (Index i = 0; i < n; ++i) {
    std::copy_n(x.value().data() + i * d + start, len, out.data() + i * len);
  }
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < len; ++j) dx[i * d + start + j] += self->grad[i * len + j];
      }
    };
  });
}

// Channel `c` of a rank-4 tensor, keeping the axis (shape [N,1,H,W]).
template <typename T>
Var<T> select_channel(Tape<T>& tape, Var<T> x, Index c) {
  detail::require_rank(x.shape(), 4, "select_channel");
  const Index n = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (c < 0 || c >= ch) throw ShapeError("select_channel: channel out of range");
  Tensor<T> out({n, 1, x.dim(2), x.dim(3)});
  for (Index i = 0; i < n; ++i) std::copy_n(x.value().data() + (i * ch + c) * hw, hw, out.data() + i * hw);
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      for (Index i = 0; i < n; ++i) {
        for (Index p = 0; p < hw; ++p) dx[(i * ch + c) * hw + p] += self->grad[i * hw + p];
      }
    };
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, Var<T> a, Var<T> b) {
  Tensor<T> out = a.value();
  out += b.value();
  return tape.record(std::move(out), {a, b}, [=](Node<T>* self) {
    return [=]() {
      if (wants_grad(a)) a.node()->grad_buffer() += self->grad;
      if (wants_grad(b)) b.node()->grad_buffer() += self->grad;
    };
  });
}

// sum_i weights[i] * terms[i] for scalar terms.
template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  T total{0};
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i].value().item();
  return tape.record(Tensor<T>::scalar(total), terms, [=](Node<T>* self) {
    return [=]() {
      const T g = self->grad[0];
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (wants_grad(terms[i])) terms[i].node()->grad_buffer()[0] += weights[i] * g;
      }
    };
  });
}

// Elementwise clamp; gradient passes only strictly inside (lo, hi).
template <typename T>
Var<T> clamp(Tape<T>& tape, Var<T> x, T lo, T hi) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = std::clamp(v, lo, hi);
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      const T* xv = x.value().data();
      for (Index i = 0; i < self->value.numel(); ++i) {
        if (xv[i] > lo && xv[i] < hi) dx[i] += self->grad[i];
      }
    };
  });
}

}  // namespace monet
