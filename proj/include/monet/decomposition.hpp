#pragma once

// Autoregressive scope/mask recursion, carried out entirely in log space:
//   log m_k = log s_{k-1} + log alpha_k
//   log s_k = log s_{k-1} + log(1 - alpha_k),   log s_0 = 0
// and the last mask takes the remaining scope, log m_K = log s_{K-1}.
// The masks telescope to sum exactly to one per pixel.

#include <limits>
#include <vector>

#include "monet/attention_net.hpp"

namespace monet {

template <typename T>
struct Decomposition {
  Var<T> log_masks;               // [N, K, H, W]
  std::vector<Var<T>> log_scopes;  // s_0 .. s_{K-1}, each [N, 1, H, W]
  int attention_calls = 0;
};

// `attend(log_scope)` returns an AttentionOutput for the current scope. Both
// log terms are floored at kLogFloor before accumulation.
template <typename T, typename Attend>
Decomposition<T> decompose_with(Tape<T>& tape, Var<T> x, Index slots, Attend&& attend) {
  if (slots < 2) throw ArgumentError("decompose: slot count must be >= 2, got " + std::to_string(slots));
  detail::require_rank(x.shape(), 4, "decompose");
  const T floor = static_cast<T>(kLogFloor);
  const T top = std::numeric_limits<T>::max();
  Decomposition<T> out;
  Var<T> log_scope = tape.constant(Tensor<T>({x.dim(0), 1, x.dim(2), x.dim(3)}));
  out.log_scopes.push_back(log_scope);
  std::vector<Var<T>> masks;
  for (Index k = 0; k + 1 < slots; ++k) {
    AttentionOutput<T> a = attend(log_scope);
    ++out.attention_calls;
    masks.push_back(add(tape, log_scope, clamp(tape, a.log_alpha, floor, top)));
    log_scope = add(tape, log_scope, clamp(tape, a.log_one_minus_alpha, floor, top));
    out.log_scopes.push_back(log_scope);
  }
  masks.push_back(log_scope);
  out.log_masks = concat_channels(tape, masks);
  return out;
}

template <typename T>
Decomposition<T> decompose(Tape<T>& tape, const BoundParams<T>& p, const AttentionConfig& cfg, Var<T> x,
                           Index slots) {
  return decompose_with(tape, x, slots,
                        [&](Var<T> log_scope) { return attention_forward(tape, p, cfg, x, log_scope); });
}

// Runs the recursion for a slot count other than the one used in training.
// The attention network is slot-count agnostic, so this is the same code path.
template <typename T>
Decomposition<T> extend_slots(Tape<T>& tape, const BoundParams<T>& p, const AttentionConfig& cfg, Var<T> x,
                              Index test_slots) {
  return decompose(tape, p, cfg, x, test_slots);
}

// Gradient-free convenience: log masks [N, K, H, W] for image batch x.
template <typename T>
Tensor<T> decompose_masks(const ParamSet<T>& params, const AttentionConfig& cfg, const Tensor<T>& x,
                          Index slots) {
  Tape<T> tape;
  BoundParams<T> p(tape, params, false);
  return decompose(tape, p, cfg, tape.constant(x), slots).log_masks.value();
}

}  // namespace monet
