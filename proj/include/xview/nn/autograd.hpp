#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value in the graph is a 2-D matrix; scalars are 1x1.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace xview::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thread-local switch that controls whether operations record a graph.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  using NodePtr = std::shared_ptr<Node>;

  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  Matrix<T>& grad_ref() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Matrix<T>::Zero(value.rows(), value.cols());
    }
    return grad;
  }
  bool has_grad() const { return grad.size() == value.size() && grad.size() > 0; }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Matrix<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix<T>& value() const { return node_->value; }
  Matrix<T>& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  T item() const { return node_->value(0, 0); }

  /// Gradient accumulated by backward(); zero matrix if never touched.
  Matrix<T> grad() const {
    if (node_->has_grad()) return node_->grad;
    return Matrix<T>::Zero(rows(), cols());
  }
  void zero_grad() {
    if (node_) node_->grad.resize(0, 0);
  }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps a constant (no gradient) matrix.
template <typename T>
Var<T> constant(Matrix<T> value) {
  return Var<T>(std::move(value), false);
}

/// Value-only copy cut off from the graph.
template <typename T>
Var<T> detach(const Var<T>& x) {
  return Var<T>(x.value(), false);
}

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> inputs) {
  for (const Var<T>* v : inputs) {
    if (v->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void accumulate(Node<T>& parent, const Matrix<T>& g) {
  if (!parent.requires_grad) return;
  parent.grad_ref() += g;
}

}  // namespace detail

/// Builds a graph node for an operation. The backward callback receives the
/// output node, whose `parents` are the inputs in the order given.
template <typename T, typename Backward>
Var<T> make_op(Matrix<T> value, std::initializer_list<const Var<T>*> inputs,
               Backward&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (GradMode::enabled() && detail::any_requires_grad<T>(inputs)) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var<T>* v : inputs) node->parents.push_back(v->node());
    node->backward_fn = std::forward<Backward>(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> make_op_n(Matrix<T> value, const std::vector<Var<T>>& inputs,
                 std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (GradMode::enabled() && any) {
    node->requires_grad = true;
    for (const auto& v : inputs) node->parents.push_back(v.node());
    node->backward_fn = std::move(backward);
  }
  return Var<T>(std::move(node));
}

/// Reverse sweep from a scalar output. Intermediate graph structure is
/// released afterwards; leaf gradients persist until zeroed.
template <typename T>
void backward(const Var<T>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward() expects a 1x1 loss");
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->grad_ref().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
  for (Node<T>* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad.resize(0, 0);
    }
  }
}

}  // namespace xview::nn
