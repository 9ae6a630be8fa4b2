#pragma once

#include "faceanon/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

namespace faceanon {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  /// Adds `g` into this node's gradient, allocating it on first use.
  template <typename Derived>
  void accumulate(const Eigen::ArrayBase<Derived>& g) {
    if (grad.empty()) {
      grad = Tensor<Scalar>(value.shape(), typename Tensor<Scalar>::Array(g));
    } else {
      grad.array() += g;
    }
  }
  Tensor<Scalar>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Scalar>::zeros(value.shape());
    return grad;
  }
};

namespace detail {
bool& grad_mode_flag();
}

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a node of the computation graph. Copies share the node.
template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }
  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Value of a single-element tensor.
  Scalar item() const {
    if (node_->value.size() != 1) throw ShapeError("Var::item on non-scalar " + to_string(shape()));
    return node_->value.data()[0];
  }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Wraps a computed value; records the backward closure only when grad mode
/// is on and some input requires a gradient.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool any = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) any = any || in.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  return Var<Scalar>(std::move(value), false);
}

/// New leaf holding the same value, cut from the graph.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& v) {
  return Var<Scalar>(v.value(), false);
}

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  using NodePtr = Node<Scalar>*;
  std::vector<NodePtr> order;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  std::unordered_set<NodePtr> visited;
  // Iterative post-order DFS; deep generator graphs would overflow a recursive one.
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad = Tensor<Scalar>::ones(root.shape());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace faceanon
