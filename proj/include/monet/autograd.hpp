#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "monet/tensor.hpp"

namespace monet {

template <typename T>
class Tape;

// A node in the reverse-mode graph. Values are immutable once recorded;
// gradients are allocated on first accumulation.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::function<void()> backward;

  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape() || grad.numel() != value.numel()) {
      grad = Tensor<T>::zeros_like(value);
    }
    return grad;
  }
};

// Lightweight handle to a node owned by a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Node<T>* node) : node_(node) {}

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>* node() const { return node_; }
  // Gradient after Tape::backward; zero tensor if nothing flowed here.
  Tensor<T> grad() const {
    return node_->grad.empty() ? Tensor<T>::zeros_like(node_->value) : node_->grad;
  }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  Node<T>* node_ = nullptr;
};

// Records operations in execution order; backward() replays them in reverse.
// One tape per forward pass; nodes live until the tape is destroyed.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false); }
  Var<T> leaf(Tensor<T> value) { return push(std::move(value), true); }

  // Record an op output. `backward` reads the output node's grad and
  // accumulates into parents; it is skipped when no parent needs a gradient.
  template <typename Fn>
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, Fn&& make_backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    Var<T> out = push(std::move(value), needs);
    if (needs) out.node()->backward = make_backward(out.node());
    return out;
  }

  template <typename Fn>
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, Fn&& make_backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    Var<T> out = push(std::move(value), needs);
    if (needs) out.node()->backward = make_backward(out.node());
    return out;
  }

  // Seeds d(root)/d(root) = seed (root must be scalar) and propagates.
  void backward(Var<T> root, T seed = T{1}) {
    if (root.value().numel() != 1) throw ShapeError("backward() root must be a scalar");
    if (!root.requires_grad()) return;
    root.node()->grad_buffer()[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward && n.grad.numel() == n.value.numel() && n.value.numel() > 0) n.backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Var<T> push(Tensor<T> value, bool requires_grad) {
    auto node = std::make_unique<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var<T>(nodes_.back().get());
  }

  std::vector<std::unique_ptr<Node<T>>> nodes_;
};

template <typename T>
inline bool wants_grad(const Var<T>& v) {
  return v && v.requires_grad();
}

}  // namespace monet
