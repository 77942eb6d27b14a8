#pragma once

// Slot-wise VAE. The encoder sees [image, log mask] for one slot and
// outputs a diagonal Gaussian posterior; the spatial broadcast decoder maps
// a latent to RGB means plus one mask logit per pixel. All slots share
// weights, so slots are simply stacked along the batch axis.

#include <cmath>
#include <string>
#include <vector>

#include "monet/logspace.hpp"
#include "monet/ops.hpp"
#include "monet/params.hpp"

namespace monet {

struct VaeConfig {
  Index latent_dim = 16;
  std::vector<Index> encoder_channels{32, 32, 64, 64};
  Index encoder_hidden = 256;
  Index decoder_channels = 32;
  Index decoder_layers = 4;
  Index image_channels = 3;

  // Each unpadded 3x3 decoder conv trims one pixel per side.
  Index decoder_margin() const { return 2 * decoder_layers; }
};

inline constexpr double kLogSigmaLimit = 10.0;

// Spatial size after each stride-2, pad-1 encoder conv.
inline std::vector<std::pair<Index, Index>> encoder_plan(const VaeConfig& cfg, Index height, Index width) {
  if (height < 1 || width < 1) {
    throw ConfigError("VAE encoder: image size " + std::to_string(height) + "x" + std::to_string(width) +
                      " cannot be reduced by the stride-2 stack");
  }
  std::vector<std::pair<Index, Index>> sizes;
  Index h = height, w = width;
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    h = conv_out_size(h, 3, 2, 1);
    w = conv_out_size(w, 3, 2, 1);
    if (h < 1 || w < 1) throw ConfigError("VAE encoder: feature map vanished at layer " + std::to_string(i));
    sizes.emplace_back(h, w);
  }
  return sizes;
}

inline Index encoder_flat_features(const VaeConfig& cfg, Index height, Index width) {
  const auto sizes = encoder_plan(cfg, height, width);
  return cfg.encoder_channels.back() * sizes.back().first * sizes.back().second;
}

template <typename T>
void declare_vae_params(ParamSet<T>& params, const VaeConfig& cfg, Index height, Index width) {
  Index in_c = cfg.image_channels + 1;
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    const std::string p = "vae/enc/conv" + std::to_string(i);
    const Index out_c = cfg.encoder_channels[i];
    params.declare({p + "/w", {out_c, in_c, 3, 3}, in_c * 9, false});
    params.declare({p + "/b", {out_c}, 1, true});
    in_c = out_c;
  }
  const Index flat = encoder_flat_features(cfg, height, width);
  params.declare({"vae/enc/fc0/w", {cfg.encoder_hidden, flat}, flat, false});
  params.declare({"vae/enc/fc0/b", {cfg.encoder_hidden}, 1, true});
  params.declare({"vae/enc/fc1/w", {2 * cfg.latent_dim, cfg.encoder_hidden}, cfg.encoder_hidden, false});
  params.declare({"vae/enc/fc1/b", {2 * cfg.latent_dim}, 1, true});

  in_c = cfg.latent_dim + 2;
  for (Index i = 0; i < cfg.decoder_layers; ++i) {
    const std::string p = "vae/dec/conv" + std::to_string(i);
    params.declare({p + "/w", {cfg.decoder_channels, in_c, 3, 3}, in_c * 9, false});
    params.declare({p + "/b", {cfg.decoder_channels}, 1, true});
    in_c = cfg.decoder_channels;
  }
  params.declare({"vae/dec/out/w", {cfg.image_channels + 1, in_c, 1, 1}, in_c, false});
  params.declare({"vae/dec/out/b", {cfg.image_channels + 1}, 1, true});
}

// Builds the per-slot encoder input [N*K, C+1, H, W]: slot (n, k) gets the
// image n followed by log m_k floored at kLogFloor (so -inf masks are finite).
template <typename T>
Var<T> encoder_input(Tape<T>& tape, Var<T> x, Var<T> log_masks) {
  detail::require_rank(x.shape(), 4, "encoder_input image");
  detail::require_rank(log_masks.shape(), 4, "encoder_input masks");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = log_masks.dim(1);
  if (log_masks.dim(0) != n || log_masks.dim(2) != h || log_masks.dim(3) != w) {
    throw ShapeError("encoder_input: masks " + shape_str(log_masks.shape()) + " do not match image " +
                     shape_str(x.shape()));
  }
  const Index hw = h * w;
  const T floor = static_cast<T>(kLogFloor);
  Tensor<T> out({n * k, c + 1, h, w});
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < k; ++s) {
      T* dst = out.data() + (i * k + s) * (c + 1) * hw;
      std::copy_n(x.value().data() + i * c * hw, c * hw, dst);
      const T* lm = log_masks.value().data() + (i * k + s) * hw;
      for (Index q = 0; q < hw; ++q) dst[c * hw + q] = std::max(lm[q], floor);
    }
  }
  return tape.record(std::move(out), {x, log_masks}, [=](Node<T>* self) {
    return [=]() {
      for (Index i = 0; i < n; ++i) {
        for (Index s = 0; s < k; ++s) {
          const T* g = self->grad.data() + (i * k + s) * (c + 1) * hw;
          if (wants_grad(x)) {
            T* dx = x.node()->grad_buffer().data() + i * c * hw;
            for (Index q = 0; q < c * hw; ++q) dx[q] += g[q];
          }
          if (wants_grad(log_masks)) {
            T* dm = log_masks.node()->grad_buffer().data() + (i * k + s) * hw;
            const T* lm = log_masks.value().data() + (i * k + s) * hw;
            for (Index q = 0; q < hw; ++q) {
              if (lm[q] > floor) dm[q] += g[c * hw + q];
            }
          }
        }
      }
    };
  });
}

template <typename T>
struct Posterior {
  Var<T> mu;         // [N*K, D]
  Var<T> log_sigma;  // [N*K, D], clamped to +-kLogSigmaLimit
};

// x: [N, C, H, W]; log_masks: [N, K, H, W]. Slot (n, k) is row n*K + k.
template <typename T>
Posterior<T> encode(Tape<T>& tape, const BoundParams<T>& p, const VaeConfig& cfg, Var<T> x, Var<T> log_masks) {
  encoder_plan(cfg, x.dim(2), x.dim(3));
  Var<T> h = encoder_input(tape, x, log_masks);
  for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    const std::string prefix = "vae/enc/conv" + std::to_string(i);
    h = relu(tape, conv2d(tape, h, p(prefix + "/w"), p(prefix + "/b"), 2, 1));
  }
  const Index rows = h.dim(0);
  h = reshape(tape, h, {rows, h.value().numel() / rows});
  h = relu(tape, linear(tape, h, p("vae/enc/fc0/w"), p("vae/enc/fc0/b")));
  h = linear(tape, h, p("vae/enc/fc1/w"), p("vae/enc/fc1/b"));
  const T lim = static_cast<T>(kLogSigmaLimit);
  return {slice_cols(tape, h, 0, cfg.latent_dim),
          clamp(tape, slice_cols(tape, h, cfg.latent_dim, cfg.latent_dim), -lim, lim)};
}

// z = mu + exp(log_sigma) * noise, with `noise` drawn by the caller.
template <typename T>
Var<T> reparameterize(Tape<T>& tape, Var<T> mu, Var<T> log_sigma, const Tensor<T>& noise) {
  mu.value().require_same_shape(log_sigma.value(), "reparameterize");
  mu.value().require_same_shape(noise, "reparameterize noise");
  Tensor<T> out = mu.value();
  for (Index i = 0; i < out.numel(); ++i) out[i] += std::exp(log_sigma.value()[i]) * noise[i];
  return tape.record(std::move(out), {mu, log_sigma}, [=](Node<T>* self) {
    return [=]() {
      if (wants_grad(mu)) mu.node()->grad_buffer() += self->grad;
      if (wants_grad(log_sigma)) {
        T* d = log_sigma.node()->grad_buffer().data();
        for (Index i = 0; i < self->value.numel(); ++i) {
          d[i] += self->grad[i] * std::exp(log_sigma.value()[i]) * noise[i];
        }
      }
    };
  });
}

// Coordinate value for index i of an axis with n samples, linear in [-1, 1].
template <typename T>
T coord_value(Index i, Index n) {
  return n == 1 ? T{0} : static_cast<T>(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1));
}

// Tiles z: [M, D] over an HxW grid and appends x- then y-coordinate channels.
template <typename T>
Var<T> broadcast_tile(Tape<T>& tape, Var<T> z, Index height, Index width) {
  detail::require_rank(z.shape(), 2, "broadcast_tile");
  const Index m = z.dim(0), d = z.dim(1), hw = height * width;
  Tensor<T> out({m, d + 2, height, width});
  for (Index i = 0; i < m; ++i) {
    T* base = out.data() + i * (d + 2) * hw;
    for (Index c = 0; c < d; ++c) std::fill_n(base + c * hw, hw, z.value()[i * d + c]);
    for (Index r = 0; r < height; ++r) {
      for (Index col = 0; col < width; ++col) {
        base[d * hw + r * width + col] = coord_value<T>(col, width);
        base[(d + 1) * hw + r * width + col] = coord_value<T>(r, height);
      }
    }
  }
  return tape.record(std::move(out), {z}, [=](Node<T>* self) {
    return [=]() {
      T* dz = z.node()->grad_buffer().data();
      for (Index i = 0; i < m; ++i) {
        for (Index c = 0; c < d; ++c) {
          const T* g = self->grad.data() + (i * (d + 2) + c) * hw;
          T s{0};
          for (Index q = 0; q < hw; ++q) s += g[q];
          dz[i * d + c] += s;
        }
      }
    };
  });
}

// z: [M, D] -> [M, C+1, H, W]; channels 0..C-1 are RGB means, channel C the mask logit.
template <typename T>
Var<T> broadcast_decode(Tape<T>& tape, const BoundParams<T>& p, const VaeConfig& cfg, Var<T> z, Index height,
                        Index width) {
  if (height < 1 || width < 1) {
    throw ArgumentError("broadcast_decode: output size " + std::to_string(height) + "x" + std::to_string(width) +
                        " must be at least 1x1");
  }
  if (z.dim(1) != cfg.latent_dim) {
    throw ShapeError("broadcast_decode: latent width " + std::to_string(z.dim(1)) + " != " +
                     std::to_string(cfg.latent_dim));
  }
  const Index margin = cfg.decoder_margin();
  Var<T> h = broadcast_tile(tape, z, height + margin, width + margin);
  for (Index i = 0; i < cfg.decoder_layers; ++i) {
    const std::string prefix = "vae/dec/conv" + std::to_string(i);
    h = relu(tape, conv2d(tape, h, p(prefix + "/w"), p(prefix + "/b"), 1, 0));
  }
  return conv2d(tape, h, p("vae/dec/out/w"), p("vae/dec/out/b"), 1, 0);
}

// Log-softmax of the mask-logit channel across slots.
// decoded: [N*K, C+1, H, W] -> [N, K, H, W].
template <typename T>
Var<T> reconstruct_masks(Tape<T>& tape, Var<T> decoded, Index slots) {
  detail::require_rank(decoded.shape(), 4, "reconstruct_masks");
  if (slots < 1 || decoded.dim(0) % slots != 0) {
    throw ShapeError("reconstruct_masks: " + std::to_string(decoded.dim(0)) + " rows not divisible by K=" +
                     std::to_string(slots));
  }
  const Index n = decoded.dim(0) / slots, ch = decoded.dim(1), hw = decoded.dim(2) * decoded.dim(3);
  const Index logit_c = ch - 1;
  Tensor<T> out({n, slots, decoded.dim(2), decoded.dim(3)});
  std::vector<T> a(static_cast<std::size_t>(slots));
  for (Index i = 0; i < n; ++i) {
    for (Index q = 0; q < hw; ++q) {
      for (Index k = 0; k < slots; ++k) a[k] = decoded.value()[((i * slots + k) * ch + logit_c) * hw + q];
      const T lse = logsumexp<T>(a);
      for (Index k = 0; k < slots; ++k) out[(i * slots + k) * hw + q] = a[k] - lse;
    }
  }
  return tape.record(std::move(out), {decoded}, [=](Node<T>* self) {
    return [=]() {
      T* dd = decoded.node()->grad_buffer().data();
      for (Index i = 0; i < n; ++i) {
        for (Index q = 0; q < hw; ++q) {
          T gsum{0};
          for (Index k = 0; k < slots; ++k) gsum += self->grad[(i * slots + k) * hw + q];
          for (Index k = 0; k < slots; ++k) {
            const Index o = (i * slots + k) * hw + q;
            dd[((i * slots + k) * ch + logit_c) * hw + q] += self->grad[o] - std::exp(self->value[o]) * gsum;
          }
        }
      }
    };
  });
}

// Single-slot visualisation mask: sigmoid of the logit, i.e. the slot's
// softmax weight against a zero reference instead of the other slots.
template <typename T>
Tensor<T> unnormalized_slot_mask(const Tensor<T>& logits) {
  Tensor<T> out = logits;
  for (auto& v : out.vec()) v = sigmoid(v);
  return out;
}

}  // namespace monet
