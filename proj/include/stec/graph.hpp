#pragma once

#include "stec/tensor.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace stec::grad {

using NodeId = int;

struct GradError : std::runtime_error {
  NodeId node;
  explicit GradError(const std::string& msg, NodeId id = -1)
      : std::runtime_error(msg + (id >= 0 ? " (node " + std::to_string(id) + ")"
                                          : std::string{})),
        node(id) {}
};

// Reverse-mode tape. Ops append nodes eagerly, so insertion order is a
// topological order and the graph is acyclic by construction. Values are
// immutable once a node is created; backward() only writes grad buffers.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  NodeId leaf(Tensor value, const std::string& name = {}) {
    return push(std::move(value), {}, nullptr, name);
  }

  NodeId push(Tensor value, std::vector<NodeId> parents, BackwardFn bwd,
              const std::string& name = {}) {
    bool req = value.requires_grad;
    for (NodeId p : parents) {
      check_id(p);
      req = req || nodes_[static_cast<std::size_t>(p)].value.requires_grad;
    }
    value.requires_grad = req;
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(bwd);
    n.name = name;
    nodes_.push_back(std::move(n));
    const NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
    if (!name.empty()) named_[name] = id;
    return id;
  }

  const Tensor& value(NodeId id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)].value;
  }

  const Tensor& grad(NodeId id) const {
    check_id(id);
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0)
      throw GradError("grad requested before backward", id);
    return n.grad;
  }

  Arr& grad_data(NodeId id) {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)].grad.data;
  }

  const std::vector<NodeId>& parents(NodeId id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)].parents;
  }

  bool requires_grad(NodeId id) const { return value(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  NodeId find(const std::string& name) const {
    auto it = named_.find(name);
    return it == named_.end() ? -1 : it->second;
  }

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. Grad buffers
  // are reset, so backward may be called repeatedly on one graph.
  void backward(NodeId loss) {
    check_id(loss);
    if (!value(loss).is_scalar())
      throw GradError("backward: loss output is not scalar, shape " +
                          shape_str(value(loss).shape),
                      loss);
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[static_cast<std::size_t>(loss)].grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.value.requires_grad || !n.backward) continue;
      n.backward(*this, id);
    }
    has_grads_ = true;
  }

  bool has_grads() const { return has_grads_; }

  // Gradients of all named leaves that require grad.
  std::unordered_map<std::string, Tensor> named_grads() const {
    std::unordered_map<std::string, Tensor> out;
    for (const auto& [name, id] : named_) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.value.requires_grad && n.grad.numel() > 0) out[name] = n.grad;
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> parents;
    BackwardFn backward;
    std::string name;
  };

  void check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw GradError("invalid node id " + std::to_string(id));
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> named_;
  bool has_grads_ = false;
};

struct BackwardSummary {
  Real loss = 0.0;
  std::unordered_map<std::string, Tensor> grads;
};

// Single-call forward/backward over an already-built tape: values were
// computed eagerly at op-construction time, so only the reverse pass runs.
inline BackwardSummary forward_backward(Graph& g, NodeId loss) {
  g.backward(loss);
  return BackwardSummary{g.value(loss).scalar_value(), g.named_grads()};
}

}  // namespace stec::grad
