#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zsseg/tensor.hpp"

namespace zsseg {

// Define-by-run reverse-mode autodiff. Every forward pass builds a fresh
// graph; parameters are long-lived leaf nodes whose gradients accumulate
// across episodes until the optimizer clears them.
//
// requires_grad on an interior node means "some leaf below needs a
// gradient"; backward ops skip parents that do not require one, so frozen
// subgraphs (the backbone trunk) cost nothing on the backward pass.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_op;
  std::string name;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_op,
               std::string name = {}) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  if (n->requires_grad) n->backward_op = std::move(backward_op);
  n->name = std::move(name);
  return n;
}

template <class T>
void topo_order(const Var<T>& root, std::vector<Node<T>*>& order) {
  // Iterative post-order DFS over parents.
  std::unordered_set<const Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

// Backpropagate from a scalar root. Seeds d(root)/d(root) = 1.
template <class T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1) throw contract_error("backward: root must be a scalar");
  if (!root->requires_grad) return;
  std::vector<Node<T>*> order;
  topo_order(root, order);
  root->ensure_grad();
  root->grad.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_op && !n->grad.empty()) n->backward_op(*n);
  }
}

}  // namespace zsseg
