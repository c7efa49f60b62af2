#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fcdx/tensor.hpp"

namespace fcdx {

// Reverse-mode tape. Nodes are created by the ops in ops.hpp; backward()
// walks the graph once in reverse topological order. Gradients of
// intermediate nodes are call-local (two backward calls on one graph are
// independent); leaves with requires_grad accumulate into their persistent
// grad buffer across calls.
template <class T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;  // persistent accumulator; leaves only
  bool requires_grad = false;
  bool leaf = false;
  std::vector<std::shared_ptr<NodeT<T>>> parents;
  // Receives this node's incoming gradient plus one call-local buffer per
  // parent (nullptr when that parent needs no gradient). Must accumulate.
  std::function<void(const TensorT<T>&, const std::vector<TensorT<T>*>&)> backward;
};

template <class T>
using VarT = std::shared_ptr<NodeT<T>>;

using Var = VarT<float>;

template <class T>
VarT<T> make_leaf(TensorT<T> value, bool requires_grad) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return n;
}

template <class T>
VarT<T> make_param(TensorT<T> value) {
  return make_leaf(std::move(value), true);
}

template <class T>
VarT<T> make_const(TensorT<T> value) {
  return make_leaf(std::move(value), false);
}

/// New constant leaf sharing the same storage: gradients stop here.
template <class T>
VarT<T> detach(const VarT<T>& v) {
  return make_leaf(v->value, false);
}

template <class T>
VarT<T> make_node(TensorT<T> value, std::vector<VarT<T>> parents,
                  std::function<void(const TensorT<T>&, const std::vector<TensorT<T>*>&)> backward) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}

template <class T>
void zero_grad(const VarT<T>& param) {
  if (param->grad.defined())
    param->grad.fill(T(0));
}

// Backpropagate from a scalar loss. Each reachable requires_grad leaf
// receives (accumulates) its gradient; repeated calls accumulate.
template <class T>
void backward(const VarT<T>& loss) {
  if (!loss->value.defined() || loss->value.numel() != 1)
    throw contract_error("backward requires a scalar loss, got " + shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;

  // Iterative post-order DFS over requires_grad subgraph.
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> visited;
  std::vector<std::pair<NodeT<T>*, size_t>> stack;
  stack.push_back({loss.get(), 0});
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeT<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<NodeT<T>*, TensorT<T>> local;
  local.emplace(loss.get(), TensorT<T>::full(loss->value.shape(), T(1)));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* node = *it;
    auto found = local.find(node);
    if (found == local.end()) continue;  // no gradient reached this node
    TensorT<T> g = std::move(found->second);
    local.erase(found);
    if (node->leaf) {
      if (!node->grad.defined()) node->grad = TensorT<T>(node->value.shape());
      node->grad.add_(g);
      continue;
    }
    std::vector<TensorT<T>*> pgrads(node->parents.size(), nullptr);
    for (size_t i = 0; i < node->parents.size(); ++i) {
      NodeT<T>* p = node->parents[i].get();
      if (!p->requires_grad) continue;
      auto [slot, inserted] = local.try_emplace(p);
      if (inserted) slot->second = TensorT<T>(p->value.shape());
      pgrads[i] = &slot->second;
    }
    node->backward(g, pgrads);
  }
}

}  // namespace fcdx
