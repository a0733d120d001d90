#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

enum class OpKind {
  Constant,
  Parameter,
  Add,
  Mul,
  Scale,
  MatMul,
  Conv2d,
  ChannelAdd,
  Relu,
  AvgPool2,
  GlobalAvgPool,
  Upsample2,
  SampleNorm,
  Concat,
  Reshape,
  Sum,
  SoftmaxCrossEntropy,
  Mse,
};

std::string_view op_name(OpKind kind);

/// Tape of operations recorded in evaluation order.
///
/// Nodes are appended as ops are applied, so creation order is a valid
/// topological order. A graph built with `record = false` evaluates values
/// only and refuses backward().
class Graph {
 public:
  /// Receives the output adjoint; accumulates into input adjoints through
  /// Graph::input_grad.
  using BackwardFn = std::function<void(Graph&, std::span<const double> out_grad)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  /// Binds an external tensor. After backward(), d(loss)/d(p) is added to
  /// p's gradient buffer when p.requires_grad() is set.
  Var parameter(Tensor& p);
  /// Binds an external tensor read-only, without copying. No gradient flows
  /// back to it.
  Var view(const Tensor& t);

  const Tensor& value(Var v) const;
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  const std::vector<std::size_t>& inputs(Var v) const { return nodes_.at(v.id).inputs; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss);

  /// Used by op implementations.
  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);
  /// Adjoint buffer for an input node during backward, or empty if that
  /// input does not need a gradient.
  std::span<double> input_grad(std::size_t node_id);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor* grad_sink = nullptr;
    BackwardFn backward;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adjoints_;
};

}  // namespace sinessl
