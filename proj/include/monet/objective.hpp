#pragma once

// Training objective: mixture negative log-likelihood of the image under the
// mask-weighted slot components, a beta-weighted KL between the factorised
// latent posterior and a unit Gaussian, and a gamma-weighted KL from the
// attention mask distribution to the decoder's mask distribution.
//
// Reduction: sum over pixels, channels and slots; mean over the batch.

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "monet/component_vae.hpp"
#include "monet/logspace.hpp"

namespace monet {

struct LossConfig {
  double beta = 0.5;
  double gamma = 0.5;
  double sigma_bg = 0.09;
  double sigma_fg = 0.11;

  static LossConfig monet() { return {}; }
  // Provided-mask component-VAE setting: one scale for every slot.
  static LossConfig provided_masks() { return {0.5, 0.25, 0.05, 0.05}; }

  // Slot 0 is the background component.
  template <typename T>
  std::vector<T> slot_sigmas(Index slots) const {
    std::vector<T> s(static_cast<std::size_t>(slots), static_cast<T>(sigma_fg));
    if (slots > 0) s[0] = static_cast<T>(sigma_bg);
    return s;
  }
};

struct LossBreakdown {
  double nll = 0;
  double latent_kl = 0;
  double mask_kl = 0;
  double total = 0;
  double beta = 0;
  double gamma = 0;
  double sigma_bg = 0;
  double sigma_fg = 0;
};

template <typename T>
T gaussian_log_density(T x, T mean, T sigma) {
  const T d = (x - mean) / sigma;
  return T(-0.5) * std::log(T(2) * std::numbers::pi_v<T> * sigma * sigma) - T(0.5) * d * d;
}

namespace detail {

inline void check_mixture_shapes(const Shape& x, const Shape& lm, const Shape& dec, std::size_t n_sigmas) {
  if (x.size() != 4 || lm.size() != 4 || dec.size() != 4) throw ShapeError("mixture_nll: rank-4 inputs expected");
  const Index n = x[0], k = lm[1];
  if (lm[0] != n || lm[2] != x[2] || lm[3] != x[3]) {
    throw ShapeError("mixture_nll: masks " + shape_str(lm) + " do not match image " + shape_str(x));
  }
  if (dec[0] != n * k || dec[1] < x[1] || dec[2] != x[2] || dec[3] != x[3]) {
    throw ShapeError("mixture_nll: component means " + shape_str(dec) + " inconsistent with K=" +
                     std::to_string(k) + " and image " + shape_str(x));
  }
  if (static_cast<Index>(n_sigmas) != k) throw ShapeError("mixture_nll: need one sigma per slot");
}

}  // namespace detail

// x: [N, C, H, W]; log_masks: [N, K, H, W]; means: [N*K, >=C, H, W] (first C
// channels used); sigmas: one per slot. Per pixel the mixture is over K
// components, each a C-channel diagonal Gaussian.
template <typename T>
Var<T> mixture_nll(Tape<T>& tape, Var<T> x, Var<T> log_masks, Var<T> means, const std::vector<T>& sigmas) {
  detail::check_mixture_shapes(x.shape(), log_masks.shape(), means.shape(), sigmas.size());
  for (T s : sigmas) {
    if (!(s > T{0})) throw ArgumentError("mixture_nll: sigma must be > 0");
  }
  const Index n = x.dim(0), c = x.dim(1), k = log_masks.dim(1), mc = means.dim(1);
  const Index hw = x.dim(2) * x.dim(3);
  auto resp = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n * k * hw));
  std::vector<T> a(static_cast<std::size_t>(k));
  const T* xv = x.value().data();
  const T* lm = log_masks.value().data();
  const T* mu = means.value().data();
  T total{0};
  for (Index i = 0; i < n; ++i) {
    for (Index q = 0; q < hw; ++q) {
      for (Index s = 0; s < k; ++s) {
        T v = lm[(i * k + s) * hw + q];
        for (Index ch = 0; ch < c; ++ch) {
          v += gaussian_log_density(xv[(i * c + ch) * hw + q], mu[((i * k + s) * mc + ch) * hw + q], sigmas[s]);
        }
        a[s] = v;
      }
      const T lse = logsumexp<T>(a);
      total -= lse;
      for (Index s = 0; s < k; ++s) (*resp)[(i * k + s) * hw + q] = std::exp(a[s] - lse);
    }
  }
  total /= static_cast<T>(n);
  return tape.record(Tensor<T>::scalar(total), {x, log_masks, means}, [=](Node<T>* self) {
    return [=]() {
      const T g = self->grad[0] / static_cast<T>(n);
      const T* xv2 = x.value().data();
      const T* mu2 = means.value().data();
      T* dlm = wants_grad(log_masks) ? log_masks.node()->grad_buffer().data() : nullptr;
      T* dmu = wants_grad(means) ? means.node()->grad_buffer().data() : nullptr;
      T* dx = wants_grad(x) ? x.node()->grad_buffer().data() : nullptr;
      for (Index i = 0; i < n; ++i) {
        for (Index s = 0; s < k; ++s) {
          const T inv_var = T{1} / (sigmas[s] * sigmas[s]);
          for (Index q = 0; q < hw; ++q) {
            const T r = (*resp)[(i * k + s) * hw + q];
            if (dlm) dlm[(i * k + s) * hw + q] -= g * r;
            if (r == T{0}) continue;
            for (Index ch = 0; ch < c; ++ch) {
              const Index xi = (i * c + ch) * hw + q, mi = ((i * k + s) * mc + ch) * hw + q;
              const T diff = (xv2[xi] - mu2[mi]) * inv_var;
              if (dmu) dmu[mi] -= g * r * diff;
              if (dx) dx[xi] += g * r * diff;
            }
          }
        }
      }
    };
  });
}

// sum over slots and dims of KL(N(mu, sigma^2) || N(0, 1)), divided by `batch`.
template <typename T>
Var<T> latent_kl(Tape<T>& tape, Var<T> mu, Var<T> log_sigma, Index batch) {
  mu.value().require_same_shape(log_sigma.value(), "latent_kl");
  T total{0};
  for (Index i = 0; i < mu.value().numel(); ++i) {
    const T m = mu.value()[i], ls = log_sigma.value()[i];
    total += T(0.5) * (std::exp(T(2) * ls) + m * m - T(1) - T(2) * ls);
  }
  total /= static_cast<T>(batch);
  return tape.record(Tensor<T>::scalar(total), {mu, log_sigma}, [=](Node<T>* self) {
    return [=]() {
      const T g = self->grad[0] / static_cast<T>(batch);
      T* dmu = wants_grad(mu) ? mu.node()->grad_buffer().data() : nullptr;
      T* dls = wants_grad(log_sigma) ? log_sigma.node()->grad_buffer().data() : nullptr;
      for (Index i = 0; i < mu.value().numel(); ++i) {
        if (dmu) dmu[i] += g * mu.value()[i];
        if (dls) dls[i] += g * (std::exp(T(2) * log_sigma.value()[i]) - T(1));
      }
    };
  });
}

// KL(q || p) over the slot axis, summed over pixels, averaged over batch.
// Entries with log q at or below kLogFloor carry zero mass (m log m -> 0).
template <typename T>
Var<T> mask_kl(Tape<T>& tape, Var<T> log_masks, Var<T> log_mtilde) {
  log_masks.value().require_same_shape(log_mtilde.value(), "mask_kl");
  detail::require_rank(log_masks.shape(), 4, "mask_kl");
  const Index n = log_masks.dim(0);
  const T floor = static_cast<T>(kLogFloor);
  T total{0};
  const T* lq = log_masks.value().data();
  const T* lp = log_mtilde.value().data();
  for (Index i = 0; i < log_masks.value().numel(); ++i) {
    if (lq[i] > floor) total += std::exp(lq[i]) * (lq[i] - lp[i]);
  }
  total /= static_cast<T>(n);
  return tape.record(Tensor<T>::scalar(total), {log_masks, log_mtilde}, [=](Node<T>* self) {
    return [=]() {
      const T g = self->grad[0] / static_cast<T>(n);
      const T* q = log_masks.value().data();
      const T* p = log_mtilde.value().data();
      T* dq = wants_grad(log_masks) ? log_masks.node()->grad_buffer().data() : nullptr;
      T* dp = wants_grad(log_mtilde) ? log_mtilde.node()->grad_buffer().data() : nullptr;
      for (Index i = 0; i < log_masks.value().numel(); ++i) {
        if (!(q[i] > floor)) continue;
        const T m = std::exp(q[i]);
        if (dq) dq[i] += g * m * (q[i] - p[i] + T(1));
        if (dp) dp[i] -= g * m;
      }
    };
  });
}

template <typename T>
struct LossTerms {
  Var<T> nll;
  Var<T> latent_kl;
  Var<T> mask_kl;
  Var<T> total;
  Var<T> log_mtilde;  // decoder mask distribution [N, K, H, W]

  LossBreakdown breakdown(const LossConfig& cfg) const {
    return {static_cast<double>(nll.value().item()),
            static_cast<double>(latent_kl.value().item()),
            static_cast<double>(mask_kl.value().item()),
            static_cast<double>(total.value().item()),
            cfg.beta,
            cfg.gamma,
            cfg.sigma_bg,
            cfg.sigma_fg};
  }
};

// Full objective from the forward-pass pieces. decoded is the raw decoder
// output [N*K, C+1, H, W]; posterior rows are [N*K, D].
template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, Var<T> x, Var<T> log_masks, const Posterior<T>& posterior, Var<T> decoded,
                        const LossConfig& cfg) {
  const Index n = x.dim(0), k = log_masks.dim(1);
  if (decoded.dim(0) != n * k || posterior.mu.dim(0) != n * k) {
    throw ShapeError("total_loss: inconsistent slot counts (masks K=" + std::to_string(k) + ", decoder rows " +
                     std::to_string(decoded.dim(0)) + ", posterior rows " + std::to_string(posterior.mu.dim(0)) +
                     ", batch " + std::to_string(n) + ")");
  }
  LossTerms<T> out;
  out.nll = mixture_nll(tape, x, log_masks, decoded, cfg.slot_sigmas<T>(k));
  out.latent_kl = latent_kl(tape, posterior.mu, posterior.log_sigma, n);
  out.log_mtilde = reconstruct_masks(tape, decoded, k);
  out.mask_kl = mask_kl(tape, log_masks, out.log_mtilde);
  out.total = weighted_sum(tape, {out.nll, out.latent_kl, out.mask_kl},
                           {T{1}, static_cast<T>(cfg.beta), static_cast<T>(cfg.gamma)});
  return out;
}

}  // namespace monet
