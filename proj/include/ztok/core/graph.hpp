#pragma once

#include <deque>
#include <functional>
#include <utility>

#include "ztok/core/array.hpp"

namespace ztok {

// Handle into a Graph's node list.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops evaluate eagerly and append a node holding the
// forward value plus a backward closure; creation order is topological, so
// backward() is a single reverse sweep. Nodes whose inputs all have
// requires_grad == false carry no closure and no gradient buffer.
template <class Real>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Array<Real> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), nullptr, requires_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Array<Real> value) { return leaf(std::move(value), false); }

  template <class F>
  Var make(Array<Real> value, std::initializer_list<Var> inputs, F&& back) {
    bool req = false;
    for (Var v : inputs) req = req || needs_grad(v);
    return make_req(std::move(value), req, std::forward<F>(back));
  }

  template <class F>
  Var make_req(Array<Real> value, bool requires_grad, F&& back) {
    nodes_.push_back(Node{std::move(value), nullptr, requires_grad});
    if (requires_grad) nodes_.back().back = std::function<void(Graph&)>(std::forward<F>(back));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Array<Real>& val(Var v) { return nodes_[v.id].value; }
  const Array<Real>& val(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of a node; valid after backward(). Absent buffers read as zero.
  Array<Real> grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.value.has_grad()) return Array<Real>::zeros_like(n.value);
    Array<Real> g = Array<Real>::zeros_like(n.value);
    g.values() = n.value.grad_values();
    return g;
  }

  // In-place accumulation target used by backward closures.
  typename Array<Real>::Map grad_buf(Var v) {
    Node& n = nodes_[v.id];
    n.value.ensure_grad();
    return n.value.grad_mat();
  }

  void backward(Var loss) {
    Node& ln = nodes_[loss.id];
    ZTOK_CHECK(ln.value.count() == 1, logic, "backward() needs a scalar loss node");
    ZTOK_CHECK(ln.requires_grad, logic, "loss does not depend on any trainable leaf");
    ln.value.ensure_grad();
    ln.value.grad_values()[0] = Real(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.value.has_grad()) n.back(*this);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array<Real> value;
    std::function<void(Graph&)> back;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

}  // namespace ztok
