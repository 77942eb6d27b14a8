#pragma once

#include <cmath>
#include <vector>

#include "monet/evaluation/segmentation.hpp"

namespace monet {

// `steps` evenly spaced values from lo to hi, endpoints exact.
inline std::vector<double> linspace(double lo, double hi, Index steps) {
  if (steps < 2) throw ArgumentError("linspace: steps must be >= 2");
  std::vector<double> v(static_cast<std::size_t>(steps));
  for (Index i = 0; i < steps; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (steps - 1);
  v.back() = hi;
  return v;
}

// Decodes a single latent row [1, D] to a frame [3, H, W]: the component
// mean weighted by sigmoid(mask logit).
template <typename T>
Tensor<T> decode_slot_frame(const ParamSet<T>& params, const ModelConfig& cfg, const Tensor<T>& z) {
  Tape<T> tape;
  BoundParams<T> p(tape, params, false);
  const Tensor<T> dec = broadcast_decode(tape, p, cfg.vae, tape.constant(z), cfg.height, cfg.width).value();
  const Index hw = cfg.height * cfg.width, c = dec.dim(1);
  Tensor<T> frame({3, cfg.height, cfg.width});
  for (Index q = 0; q < hw; ++q) {
    const T m = sigmoid(dec[(c - 1) * hw + q]);
    for (Index ch = 0; ch < 3; ++ch) frame[ch * hw + q] = m * dec[ch * hw + q];
  }
  return frame;
}

// Posterior means [K, D] of an image under `slots` attention steps.
template <typename T>
Tensor<T> posterior_means(const ParamSet<T>& params, const ModelConfig& cfg, const Tensor<T>& image, Index slots) {
  const Tensor<T> x = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  Tape<T> tape;
  BoundParams<T> p(tape, params, false);
  Var<T> xv = tape.constant(x);
  const Decomposition<T> d = decompose(tape, p, cfg.attention, xv, slots);
  return encode(tape, p, cfg.vae, xv, d.log_masks).mu.value();
}

// Frames for latent `dim` of `slot` set to each value in turn, other dims at
// their posterior means.
template <typename T>
std::vector<Tensor<T>> traverse_latent_values(const ParamSet<T>& params, const ModelConfig& cfg,
                                              const Tensor<T>& image, Index slots, Index slot, Index dim,
                                              const std::vector<double>& values) {
  if (dim < 0 || dim >= cfg.vae.latent_dim) {
    throw ArgumentError("traverse: latent dimension " + std::to_string(dim) + " out of range [0, " +
                        std::to_string(cfg.vae.latent_dim) + ")");
  }
  if (slot < 0 || slot >= slots) {
    throw ArgumentError("traverse: slot " + std::to_string(slot) + " out of range [0, " + std::to_string(slots) + ")");
  }
  const Tensor<T> mu = posterior_means(params, cfg, image, slots);
  const Index d = mu.dim(1);
  std::vector<Tensor<T>> frames;
  for (double v : values) {
    Tensor<T> z({1, d});
    for (Index j = 0; j < d; ++j) z[j] = mu[slot * d + j];
    z[dim] = static_cast<T>(v);
    frames.push_back(decode_slot_frame(params, cfg, z));
  }
  return frames;
}

template <typename T>
std::vector<Tensor<T>> traverse_latent(const ParamSet<T>& params, const ModelConfig& cfg, const Tensor<T>& image,
                                       Index slots, Index slot, Index dim, Index steps, double lo = -1.0,
                                       double hi = 1.0) {
  return traverse_latent_values(params, cfg, image, slots, slot, dim, linspace(lo, hi, steps));
}

// Frames [3, H, W] side by side: [3, H, steps * W].
template <typename T>
Tensor<float> strip(const std::vector<Tensor<T>>& frames) {
  if (frames.empty()) throw ArgumentError("strip: no frames");
  const Index h = frames[0].dim(1), w = frames[0].dim(2), n = static_cast<Index>(frames.size());
  Tensor<float> out({3, h, n * w});
  for (Index f = 0; f < n; ++f) {
    for (Index ch = 0; ch < 3; ++ch) {
      for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) {
          out[(ch * h + r) * n * w + f * w + c] = static_cast<float>(frames[static_cast<std::size_t>(f)][(ch * h + r) * w + c]);
        }
      }
    }
  }
  return out;
}

// Largest absolute pixel difference between two traversals; a value at or
// below `tolerance` means the decoder ignores both dimensions.
struct SensitivityProbe {
  double max_difference = 0;
  bool insensitive = false;
};

template <typename T>
SensitivityProbe compare_traversals(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b,
                                    double tolerance = 1e-6) {
  if (a.size() != b.size()) throw ArgumentError("compare_traversals: strips differ in length");
  SensitivityProbe p;
  for (std::size_t f = 0; f < a.size(); ++f) {
    a[f].require_same_shape(b[f], "compare_traversals");
    for (Index i = 0; i < a[f].numel(); ++i) {
      p.max_difference = std::max(p.max_difference, std::abs(static_cast<double>(a[f][i]) - b[f][i]));
    }
  }
  p.insensitive = p.max_difference <= tolerance;
  return p;
}

}  // namespace monet
