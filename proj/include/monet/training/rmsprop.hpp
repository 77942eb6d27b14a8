#pragma once

#include <cmath>
#include <string>

#include "monet/errors.hpp"
#include "monet/params.hpp"

namespace monet {

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-10;
};

// Plain RMSProp, no momentum:
//   v <- decay v + (1 - decay) g^2
//   p <- p - lr g / sqrt(v + eps)
template <typename T>
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(const ParamSet<T>& params, RmsPropConfig cfg) : cfg_(cfg), mean_square_(params.zeros_like()) {}

  const RmsPropConfig& config() const { return cfg_; }
  ParamSet<T>& state() { return mean_square_; }
  const ParamSet<T>& state() const { return mean_square_; }

  // Nothing is modified unless every gradient is finite.
  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    if (grads.size() != params.size() || mean_square_.size() != params.size()) {
      throw ShapeError("rmsprop: parameter, gradient and state sets differ in size");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Tensor<T>& g = grads.tensor(i);
      g.require_same_shape(params.tensor(i), "rmsprop gradient");
      for (Index j = 0; j < g.numel(); ++j) {
        if (!std::isfinite(g[j])) {
          throw NumericError("rmsprop: non-finite gradient in '" + grads.info(i).name + "' at element " +
                             std::to_string(j));
        }
      }
    }
    const double lr = cfg_.learning_rate, decay = cfg_.decay, eps = cfg_.epsilon;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = params.tensor(i);
      Tensor<T>& v = mean_square_.tensor(i);
      const Tensor<T>& g = grads.tensor(i);
      for (Index j = 0; j < p.numel(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double vj = decay * static_cast<double>(v[j]) + (1.0 - decay) * gj * gj;
        v[j] = static_cast<T>(vj);
        if (gj != 0.0) p[j] = static_cast<T>(static_cast<double>(p[j]) - lr * gj / std::sqrt(vj + eps));
      }
    }
  }

 private:
  RmsPropConfig cfg_;
  ParamSet<T> mean_square_;
};

}  // namespace monet
