#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "monet/autograd.hpp"

namespace monet {

// Floor applied to log-probabilities before they are accumulated. Masses
// at or below exp(kLogFloor) ~ 8.3e-7 are treated as zero.
inline constexpr double kLogFloor = -14.0;

template <typename T>
T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

// max(a) + log(sum(exp(a - max(a)))); -inf when every entry is -inf.
template <typename T>
T logsumexp(std::span<const T> a) {
  T m = neg_inf<T>();
  for (T v : a) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  T s{0};
  for (T v : a) s += std::exp(v - m);
  return m + std::log(s);
}

// Strided variant: entries a[0], a[stride], ..., a[(n-1)*stride].
template <typename T>
T logsumexp_strided(const T* a, Index n, Index stride) {
  T m = neg_inf<T>();
  for (Index k = 0; k < n; ++k) m = std::max(m, a[k * stride]);
  if (!std::isfinite(m)) return m;
  T s{0};
  for (Index k = 0; k < n; ++k) s += std::exp(a[k * stride] - m);
  return m + std::log(s);
}

// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

// log(sigmoid(x)) = -softplus(-x). This is the first entry of a 2-way
// log-softmax over [x, 0].
template <typename T>
T log_sigmoid(T x) {
  return -softplus(-x);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// Elementwise log(sigmoid(x)).
template <typename T>
Var<T> log_sigmoid(Tape<T>& tape, Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = log_sigmoid(v);
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      const T* xv = x.value().data();
      for (Index i = 0; i < self->value.numel(); ++i) dx[i] += self->grad[i] * sigmoid(-xv[i]);
    };
  });
}

// Elementwise log(1 - sigmoid(x)) = log(sigmoid(-x)).
template <typename T>
Var<T> log_one_minus_sigmoid(Tape<T>& tape, Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = log_sigmoid(-v);
  return tape.record(std::move(out), {x}, [=](Node<T>* self) {
    return [=]() {
      T* dx = x.node()->grad_buffer().data();
      const T* xv = x.value().data();
      for (Index i = 0; i < self->value.numel(); ++i) dx[i] -= self->grad[i] * sigmoid(xv[i]);
    };
  });
}

}  // namespace monet
