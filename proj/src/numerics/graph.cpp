#include "sinessl/numerics/graph.hpp"

#include <algorithm>

#include "sinessl/errors.hpp"

namespace sinessl {

const Tensor& Var::value() const {
  if (!graph) throw ContractError("Var is not attached to a graph");
  return graph->value(*this);
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::ChannelAdd: return "channel_add";
    case OpKind::Relu: return "relu";
    case OpKind::AvgPool2: return "avg_pool2";
    case OpKind::GlobalAvgPool: return "global_avg_pool";
    case OpKind::Upsample2: return "upsample2";
    case OpKind::SampleNorm: return "sample_norm";
    case OpKind::Concat: return "concat";
    case OpKind::Reshape: return "reshape";
    case OpKind::Sum: return "sum";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::Mse: return "mse";
  }
  return "unknown";
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::Constant, {}, std::move(value), nullptr, nullptr, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::view(const Tensor& t) {
  nodes_.push_back(Node{OpKind::Constant, {}, Tensor{}, &t, nullptr, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Tensor& p) {
  const bool needs = record_ && p.requires_grad();
  nodes_.push_back(Node{OpKind::Parameter, {}, Tensor{}, &p, needs ? &p : nullptr, {}, needs});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw ContractError("Var does not belong to this graph");
  const Node& n = nodes_[v.id];
  return n.ref ? *n.ref : n.value;
}

Var Graph::push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (auto id : inputs) {
      if (id >= nodes_.size()) throw ContractError("op input refers to a later node");
      needs = needs || nodes_[id].needs_grad;
    }
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), nullptr, nullptr, std::move(backward), needs});
  return Var{this, nodes_.size() - 1};
}

std::span<double> Graph::input_grad(std::size_t node_id) {
  Node& n = nodes_.at(node_id);
  if (!n.needs_grad) return {};
  auto& adj = adjoints_[node_id];
  if (adj.empty()) adj.assign(value(Var{this, node_id}).numel(), 0.0);
  return adj;
}

void Graph::backward(Var loss) {
  if (!record_) throw ContractError("backward() on a graph built without gradient recording");
  const Tensor& out = value(loss);
  if (out.numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(out.shape()));

  adjoints_.assign(nodes_.size(), {});
  if (!nodes_[loss.id].needs_grad) return;
  adjoints_[loss.id].assign(1, 1.0);

  for (std::size_t k = loss.id + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (adjoints_[k].empty()) continue;
    // Inputs always precede k, so callbacks never touch adjoints_[k].
    if (n.backward) n.backward(*this, adjoints_[k]);
    if (n.grad_sink) {
      auto dst = n.grad_sink->ensure_grad();
      const auto& src = adjoints_[k];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (k != loss.id) std::vector<double>().swap(adjoints_[k]);
  }
  adjoints_.clear();
}

}  // namespace sinessl
