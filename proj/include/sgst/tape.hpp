#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "sgst/tensor.hpp"

namespace sgst {

using NodeId = std::size_t;

enum class OpKind {
  Constant,
  Variable,
  Parameter,
  Matmul,
  Add,
  AddRow,
  Scale,
  LayerNorm,
  Relu,
  Gather,
  AddPositional,
  ConcatCols,
  Attention,
  NllLoss,
  Sum,
  Dot,
  Normalize,
};

std::string_view op_name(OpKind kind);

class Tape;

// Reads the gradient of node `self` from the tape and accumulates into its inputs.
using BackwardFn = std::function<void(Tape& tape, NodeId self)>;

// Gradients produced by one backward pass, indexed by node id.
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  // Throws ContractError when the node received no gradient.
  const Tensor& at(NodeId id) const;
  std::optional<Tensor> take(NodeId id);

 private:
  std::vector<std::optional<Tensor>> grads_;
};

// Linear record of a forward computation. Nodes are appended in execution order, so every
// node's inputs precede it and a single reverse sweep visits each node once.
class Tape {
 public:
  // With recording off, ops compute values only and backward is unavailable.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  NodeId constant(Tensor value);
  // Differentiable leaf owning its value.
  NodeId variable(Tensor value);
  // Differentiable leaf aliasing an externally owned tensor; it must outlive the tape.
  NodeId parameter(const Tensor& value);

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of a node during backward, allocated as zeros on first use.
  Tensor& grad(NodeId id);
  const Tensor* grad_if_any(NodeId id) const;

  // Reverse sweep from a scalar loss. `seed` scales dloss/dloss.
  Gradients backward(NodeId loss, double seed = 1.0);

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
};

}  // namespace sgst
