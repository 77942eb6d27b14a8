#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "monet/decomposition.hpp"
#include "monet/objective.hpp"

namespace monet {

struct ModelConfig {
  Index height = 64;
  Index width = 64;
  AttentionConfig attention;
  VaeConfig vae;

  static ModelConfig for_image_size(Index size) {
    ModelConfig cfg;
    cfg.height = cfg.width = size;
    cfg.attention = AttentionConfig::for_image_size(size);
    return cfg;
  }
};

// Attention parameters first, then the VAE; names are prefixed by module.
template <typename T>
ParamSet<T> make_params(const ModelConfig& cfg) {
  ParamSet<T> params;
  declare_attention_params(params, cfg.attention, cfg.height, cfg.width);
  declare_vae_params(params, cfg.vae, cfg.height, cfg.width);
  return params;
}

template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamSet<T> params = make_params<T>(cfg);
  init_truncated_normal(params, seed);
  return params;
}

inline bool is_attention_param(const std::string& name) { return name.rfind("attention/", 0) == 0; }

template <typename T>
struct ForwardPass {
  Var<T> log_masks;  // [N, K, H, W]
  Posterior<T> posterior;
  Var<T> z;
  Var<T> decoded;     // [N*K, C+1, H, W]
  Var<T> log_mtilde;  // [N, K, H, W]
  LossTerms<T> loss;
  int attention_calls = 0;
};

// Standard-normal reparameterisation noise for N images x K slots.
template <typename T>
Tensor<T> draw_latent_noise(std::mt19937_64& rng, Index rows, Index latent_dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<T> eps({rows, latent_dim});
  for (auto& v : eps.vec()) v = static_cast<T>(normal(rng));
  return eps;
}

// One full forward pass. When `provided_log_masks` is set the attention
// network is bypassed and those masks condition the VAE. With an empty
// `noise` tensor the posterior mean is decoded instead of a sample.
template <typename T>
ForwardPass<T> forward(Tape<T>& tape, const BoundParams<T>& p, const ModelConfig& cfg, const Tensor<T>& images,
                       Index slots, const LossConfig& loss_cfg, const Tensor<T>& noise,
                       const std::optional<Tensor<T>>& provided_log_masks = std::nullopt) {
  Var<T> x = tape.constant(images);
  ForwardPass<T> out;
  if (provided_log_masks) {
    if (provided_log_masks->dim(1) != slots) {
      throw ConfigError("provided masks have " + std::to_string(provided_log_masks->dim(1)) + " slots, model uses " +
                        std::to_string(slots));
    }
    out.log_masks = tape.constant(*provided_log_masks);
  } else {
    Decomposition<T> d = decompose(tape, p, cfg.attention, x, slots);
    out.log_masks = d.log_masks;
    out.attention_calls = d.attention_calls;
  }
  out.posterior = encode(tape, p, cfg.vae, x, out.log_masks);
  out.z = noise.empty() ? out.posterior.mu : reparameterize(tape, out.posterior.mu, out.posterior.log_sigma, noise);
  out.decoded = broadcast_decode(tape, p, cfg.vae, out.z, images.dim(2), images.dim(3));
  out.loss = total_loss(tape, x, out.log_masks, out.posterior, out.decoded, loss_cfg);
  out.log_mtilde = out.loss.log_mtilde;
  return out;
}

}  // namespace monet
