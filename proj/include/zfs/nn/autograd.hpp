#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "zfs/nn/tensor.hpp"

namespace zfs::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backfn;

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
  }
  void accum_grad(const Tensor<T>& g) {
    ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) grad[i] += g[i];
  }
};

/// Handle to a node in the dynamically built computation graph. Ops on Vars
/// record a backward closure only when some input requires gradients, so
/// frozen-parameter forward passes cost nothing extra.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> v, bool requires_grad = false) : n_(std::make_shared<Node<T>>()) {
    n_->value = std::move(v);
    n_->requires_grad = requires_grad;
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& value() { return n_->value; }
  const Tensor<T>& grad() const { return n_->grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  std::shared_ptr<Node<T>> node() const { return n_; }

  const Shape& shape() const { return n_->value.shape(); }
  int64_t dim(size_t i) const { return n_->value.dim(i); }
  int64_t numel() const { return n_->value.numel(); }

  void zero_grad() {
    if (n_) n_->grad = Tensor<T>();
  }

  /// Same value, no history. Gradients never flow through the result.
  Var detach() const { return Var(n_->value, false); }

  static Var from_node(std::shared_ptr<Node<T>> n) {
    Var v;
    v.n_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<Node<T>> n_;
};

template <typename T>
Var<T> constant(Tensor<T> v) {
  return Var<T>(std::move(v), false);
}

template <typename T>
Var<T> parameter(Tensor<T> v) {
  return Var<T>(std::move(v), true);
}

/// Create an op node. The backward closure reads node.grad and accumulates
/// into the parents it captured.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backfn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = rg;
  if (rg) {
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backfn = std::move(backfn);
  }
  return Var<T>::from_node(std::move(n));
}

/// Reverse-mode sweep from a scalar root.
template <typename T>
void backward(const Var<T>& root) {
  ZFS_CHECK(root.numel() == 1, "backward root must be scalar");
  ZFS_CHECK(root.requires_grad(), "backward on a graph with no gradients");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad();
  root.node()->grad.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backfn) {
      n->ensure_grad();
      n->backfn(*n);
      n->backfn = nullptr;  // release closure captures eagerly
    }
  }
}

}  // namespace zfs::nn
