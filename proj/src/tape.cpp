#include "sgst/tape.hpp"

#include "sgst/errors.hpp"

namespace sgst {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Variable: return "variable";
    case OpKind::Parameter: return "parameter";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::AddRow: return "add_row";
    case OpKind::Scale: return "scale";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Relu: return "relu";
    case OpKind::Gather: return "gather";
    case OpKind::AddPositional: return "add_positional";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Attention: return "attention";
    case OpKind::NllLoss: return "nll_loss";
    case OpKind::Sum: return "sum";
    case OpKind::Dot: return "dot";
    case OpKind::Normalize: return "normalize";
  }
  return "unknown";
}

const Tensor& Gradients::at(NodeId id) const {
  if (!has(id)) throw ContractError("no gradient recorded for node " + std::to_string(id));
  return *grads_[id];
}

std::optional<Tensor> Gradients::take(NodeId id) {
  if (!has(id)) return std::nullopt;
  return std::move(grads_[id]);
}

NodeId Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::Constant, {}, std::move(value), nullptr, {}, false});
  return nodes_.size() - 1;
}

NodeId Tape::variable(Tensor value) {
  nodes_.push_back(Node{OpKind::Variable, {}, std::move(value), nullptr, {}, record_});
  return nodes_.size() - 1;
}

NodeId Tape::parameter(const Tensor& value) {
  nodes_.push_back(Node{OpKind::Parameter, {}, Tensor{}, &value, {}, record_});
  return nodes_.size() - 1;
}

NodeId Tape::push(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (NodeId in : inputs) {
      if (in >= nodes_.size()) throw ContractError("tape input refers to a future node");
      needs = needs || nodes_[in].requires_grad;
    }
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), nullptr, std::move(backward), needs});
  return nodes_.size() - 1;
}

const Tensor& Tape::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad(NodeId id) {
  if (!grads_[id]) grads_[id].emplace(value(id).shape());
  return *grads_[id];
}

const Tensor* Tape::grad_if_any(NodeId id) const {
  return id < grads_.size() && grads_[id] ? &*grads_[id] : nullptr;
}

Gradients Tape::backward(NodeId loss, double seed) {
  if (!record_) throw ContractError("backward on a tape that did not record");
  if (loss >= nodes_.size()) throw ContractError("loss node does not exist");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss].emplace(value(loss).shape(), seed);
  for (NodeId id = loss + 1; id-- > 0;) {
    if (!grads_[id] || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, id);
  }
  // Only differentiable leaves and reached nodes keep gradients.
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].requires_grad) grads_[id].reset();
  }
  return Gradients(std::move(grads_));
}

}  // namespace sgst
