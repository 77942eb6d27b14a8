#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "monet/autograd.hpp"

namespace monet {

struct ParamInfo {
  std::string name;
  Shape shape;
  Index fan_in = 1;
  bool is_bias = false;
};

// Ordered collection of named parameter tensors. Order is declaration order
// and is what checkpoints and gradient buffers follow.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& declare(ParamInfo info) {
    if (index_.count(info.name)) throw ConfigError("duplicate parameter name: " + info.name);
    index_.emplace(info.name, infos_.size());
    tensors_.emplace_back(info.shape);
    infos_.push_back(std::move(info));
    return tensors_.back();
  }

  std::size_t size() const { return infos_.size(); }
  const ParamInfo& info(std::size_t i) const { return infos_.at(i); }
  const std::vector<ParamInfo>& infos() const { return infos_; }
  Tensor<T>& tensor(std::size_t i) { return tensors_.at(i); }
  const Tensor<T>& tensor(std::size_t i) const { return tensors_.at(i); }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  Tensor<T>& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Tensor<T>& at(const std::string& name) const { return tensors_[index_of(name)]; }

  Index total_elements() const {
    Index n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  // Same names and shapes, all zeros (gradient / optimizer buffers).
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& info : infos_) out.declare(info);
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) t.fill(T{0});
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.infos_.size() != b.infos_.size()) return false;
    for (std::size_t i = 0; i < a.infos_.size(); ++i) {
      if (a.infos_[i].name != b.infos_[i].name || !(a.tensors_[i] == b.tensors_[i])) return false;
    }
    return true;
  }

 private:
  std::vector<ParamInfo> infos_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters materialised as leaves on a tape for one forward/backward pass.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamSet<T>& params, bool requires_grad = true)
      : params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      vars_.push_back(requires_grad ? tape.leaf(params.tensor(i)) : tape.constant(params.tensor(i)));
    }
  }

  Var<T> operator()(const std::string& name) const { return vars_[params_->index_of(name)]; }
  Var<T> at(std::size_t i) const { return vars_.at(i); }
  std::size_t size() const { return vars_.size(); }

  // grads[i] += scale * d(root)/d(param i)
  void accumulate_grads(ParamSet<T>& grads, T scale = T{1}) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      const Node<T>* n = vars_[i].node();
      if (n->grad.numel() != n->value.numel() || n->value.numel() == 0) continue;
      Tensor<T>& g = grads.tensor(i);
      for (Index j = 0; j < g.numel(); ++j) g[j] += scale * n->grad[j];
    }
  }

 private:
  const ParamSet<T>* params_;
  std::vector<Var<T>> vars_;
};

// Standard deviation of a unit normal truncated to [-2, 2].
inline constexpr double kTruncatedNormalStd = 0.87962566103423978;

// Weights ~ normal truncated at two standard deviations by resampling, with
// the pre-truncation scale chosen so the truncated draw has standard
// deviation 1/sqrt(fan_in). Biases are zero. Draws follow declaration order.
template <typename T>
void init_truncated_normal(ParamSet<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamInfo& info = params.info(i);
    Tensor<T>& t = params.tensor(i);
    if (info.is_bias) {
      t.fill(T{0});
      continue;
    }
    const double stddev = 1.0 / std::sqrt(static_cast<double>(info.fan_in)) / kTruncatedNormalStd;
    for (Index j = 0; j < t.numel(); ++j) {
      double v;
      do {
        v = normal(rng);
      } while (std::abs(v) > 2.0);
      t[j] = static_cast<T>(v * stddev);
    }
  }
}

}  // namespace monet
