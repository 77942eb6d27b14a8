#pragma once

// Recurrent attention network: a U-Net over [image, log scope] producing one
// logit channel per pixel, from which log(alpha) and log(1 - alpha) follow.

#include <string>
#include <utility>
#include <vector>

#include "monet/logspace.hpp"
#include "monet/ops.hpp"
#include "monet/params.hpp"

namespace monet {

struct AttentionConfig {
  // Output channels of each down-path block; the up path mirrors this list.
  std::vector<Index> channels{32, 32, 64, 64, 64};
  std::vector<Index> mlp_hidden{128, 128};
  Index image_channels = 3;

  Index block_count() const { return static_cast<Index>(channels.size()); }
  Index input_channels() const { return image_channels + 1; }
  // Output channels of up-block j (mirror of the down path).
  Index up_channels(Index j) const { return channels[static_cast<std::size_t>(block_count() - 1 - j)]; }

  // Five blocks up to 64x64 inputs, six for larger ones (128x128 CLEVR crops).
  static AttentionConfig for_image_size(Index size) {
    AttentionConfig cfg;
    if (size > 64) cfg.channels.push_back(64);
    return cfg;
  }
};

// Spatial sizes visited by the down path: sizes[i] is the resolution block i
// runs at; the bottleneck MLP sees sizes.back().
struct UNetPlan {
  std::vector<std::pair<Index, Index>> sizes;
  Index bottleneck_features = 0;
};

inline UNetPlan unet_plan(const AttentionConfig& cfg, Index height, Index width) {
  const Index blocks = cfg.block_count();
  if (blocks < 1) throw ConfigError("attention U-Net needs at least one block");
  const Index factor = Index{1} << (blocks - 1);
  if (height % factor != 0 || width % factor != 0 || height < factor || width < factor) {
    throw ConfigError("attention U-Net with " + std::to_string(blocks) + " blocks needs spatial size divisible by " +
                      std::to_string(factor) + ", got " + std::to_string(height) + "x" + std::to_string(width));
  }
  UNetPlan plan;
  Index h = height, w = width;
  for (Index i = 0; i < blocks; ++i) {
    plan.sizes.emplace_back(h, w);
    if (i + 1 < blocks) {
      h /= 2;
      w /= 2;
    }
  }
  // A 1x1 bottleneck is legal, but instance norm over one pixel returns just
  // its bias, so the last down block then receives no gradient.
  plan.bottleneck_features = cfg.channels.back() * h * w;
  return plan;
}

template <typename T>
void declare_attention_params(ParamSet<T>& params, const AttentionConfig& cfg, Index height, Index width) {
  const UNetPlan plan = unet_plan(cfg, height, width);
  const Index blocks = cfg.block_count();
  Index in_c = cfg.input_channels();
  for (Index i = 0; i < blocks; ++i) {
    const std::string p = "attention/down" + std::to_string(i);
    const Index out_c = cfg.channels[static_cast<std::size_t>(i)];
    params.declare({p + "/conv", {out_c, in_c, 3, 3}, in_c * 9, false});
    params.declare({p + "/norm_bias", {out_c}, 1, true});
    in_c = out_c;
  }
  Index in_f = plan.bottleneck_features;
  std::vector<Index> mlp_sizes = cfg.mlp_hidden;
  mlp_sizes.push_back(plan.bottleneck_features);
  for (std::size_t j = 0; j < mlp_sizes.size(); ++j) {
    const std::string p = "attention/mlp" + std::to_string(j);
    params.declare({p + "/w", {mlp_sizes[j], in_f}, in_f, false});
    params.declare({p + "/b", {mlp_sizes[j]}, 1, true});
    in_f = mlp_sizes[j];
  }
  Index prev_c = cfg.channels.back();
  for (Index j = 0; j < blocks; ++j) {
    const std::string p = "attention/up" + std::to_string(j);
    const Index skip_c = cfg.channels[static_cast<std::size_t>(blocks - 1 - j)];
    const Index conv_in = prev_c + skip_c;
    const Index out_c = cfg.up_channels(j);
    params.declare({p + "/conv", {out_c, conv_in, 3, 3}, conv_in * 9, false});
    params.declare({p + "/norm_bias", {out_c}, 1, true});
    prev_c = out_c;
  }
  params.declare({"attention/out/w", {1, prev_c, 1, 1}, prev_c, false});
  params.declare({"attention/out/b", {1}, 1, true});
}

// input: [N, 4, H, W] (image channels then log scope). Returns [N, 1, H, W].
template <typename T>
Var<T> unet_apply(Tape<T>& tape, const BoundParams<T>& p, const AttentionConfig& cfg, Var<T> input) {
  detail::require_rank(input.shape(), 4, "unet_apply");
  if (input.dim(1) != cfg.input_channels()) {
    throw ShapeError("unet_apply: expected " + std::to_string(cfg.input_channels()) + " input channels, got " +
                     shape_str(input.shape()));
  }
  const UNetPlan plan = unet_plan(cfg, input.dim(2), input.dim(3));
  const Index blocks = cfg.block_count();
  const Index n = input.dim(0);

  auto block_conv = [&](const std::string& prefix, Var<T> h) {
    Var<T> w = p(prefix + "/conv");
    if (w.dim(1) != h.dim(1)) {
      throw ShapeError("attention block " + prefix + ": conv expects " + std::to_string(w.dim(1)) +
                       " input channels, got " + std::to_string(h.dim(1)));
    }
    Var<T> b = p(prefix + "/norm_bias");
    if (b.value().numel() != w.dim(0)) {
      throw ShapeError("attention block " + prefix + ": norm bias has " + std::to_string(b.value().numel()) +
                       " entries for " + std::to_string(w.dim(0)) + " channels");
    }
    h = conv2d(tape, h, w, Var<T>{}, 1, 1);
    h = instance_norm(tape, h, b);
    return relu(tape, h);
  };

  std::vector<Var<T>> skips;
  Var<T> h = input;
  for (Index i = 0; i < blocks; ++i) {
    h = block_conv("attention/down" + std::to_string(i), h);
    skips.push_back(h);
    if (i + 1 < blocks) h = downsample2(tape, h);
  }

  const Shape skip_shape = skips.back().shape();
  Var<T> f = reshape(tape, skips.back(), {n, plan.bottleneck_features});
  for (std::size_t j = 0; j < cfg.mlp_hidden.size() + 1; ++j) {
    const std::string prefix = "attention/mlp" + std::to_string(j);
    Var<T> w = p(prefix + "/w");
    if (w.dim(1) != f.dim(1)) {
      throw ShapeError("attention block " + prefix + ": expects " + std::to_string(w.dim(1)) + " features, got " +
                       std::to_string(f.dim(1)));
    }
    f = relu(tape, linear(tape, f, w, p(prefix + "/b")));
  }
  h = reshape(tape, f, skip_shape);

  for (Index j = 0; j < blocks; ++j) {
    h = concat_channels(tape, {h, skips[static_cast<std::size_t>(blocks - 1 - j)]});
    h = block_conv("attention/up" + std::to_string(j), h);
    if (j + 1 < blocks) h = upsample2(tape, h);
  }
  return conv2d(tape, h, p("attention/out/w"), p("attention/out/b"), 1, 0);
}

template <typename T>
struct AttentionOutput {
  Var<T> log_alpha;
  Var<T> log_one_minus_alpha;
};

// log_scope: [N, 1, H, W]. Both outputs are unclamped 2-way log-softmax values.
template <typename T>
AttentionOutput<T> attention_forward(Tape<T>& tape, const BoundParams<T>& p, const AttentionConfig& cfg, Var<T> x,
                                     Var<T> log_scope) {
  if (x.dim(2) != log_scope.dim(2) || x.dim(3) != log_scope.dim(3) || x.dim(0) != log_scope.dim(0)) {
    throw ShapeError("attention_forward: image " + shape_str(x.shape()) + " and scope " +
                     shape_str(log_scope.shape()) + " differ in size");
  }
  Var<T> logits = unet_apply(tape, p, cfg, concat_channels(tape, {x, log_scope}));
  return {log_sigmoid(tape, logits), log_one_minus_sigmoid(tape, logits)};
}

}  // namespace monet
