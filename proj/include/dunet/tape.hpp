#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dunet/error.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

enum class OpKind {
  leaf,
  conv1d,
  conv1d_transpose,
  leaky_relu,
  tanh,
  concat_channels,
  decimate2,
  upsample_linear2,
  mse,
  add,
  sub,
  sum,
  reshape,
};

inline std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv1d: return "conv1d";
    case OpKind::conv1d_transpose: return "conv1d_transpose";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::tanh: return "tanh";
    case OpKind::concat_channels: return "concat_channels";
    case OpKind::decimate2: return "decimate2";
    case OpKind::upsample_linear2: return "upsample_linear2";
    case OpKind::mse: return "mse";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::sum: return "sum";
    case OpKind::reshape: return "reshape";
  }
  return "?";
}

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
  bool operator==(const Var&) const = default;
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Nodes are stored in recording order, which is a topological order since an
/// op can only consume handles that already exist. backward() walks the nodes
/// in exact reverse order. Gradients of intermediate nodes are released once
/// they have been propagated; leaf gradients stay until the tape is destroyed
/// or zero_grad() is called.
///
/// A Tape is not thread-safe. Use one per thread.
template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var leaf(Tensor<Scalar> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  /// Records an op output. The backward closure runs only if some input needs a gradient.
  Var record(OpKind op, std::initializer_list<Var> inputs, Tensor<Scalar> value, Backward backward) {
    return record(op, std::vector<Var>(inputs), std::move(value), std::move(backward));
  }

  Var record(OpKind op, const std::vector<Var>& inputs, Tensor<Scalar> value, Backward backward) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    for (Var v : inputs) {
      check(v);
      n.inputs.push_back(v.id);
      n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Tensor<Scalar>& value(Var v) const {
    check(v);
    return nodes_[v.id].value;
  }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const {
    check(v);
    return nodes_[v.id].requires_grad;
  }
  OpKind op(Var v) const {
    check(v);
    return nodes_[v.id].op;
  }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// d loss / d v after backward(). Unreached tensors report zeros.
  const Tensor<Scalar>& grad(Var v) {
    check(v);
    Node& n = nodes_[v.id];
    if (!n.requires_grad) throw ContractError("grad() on a tensor that does not require grad");
    if (n.grad.size() != n.value.size()) n.grad = Tensor<Scalar>(n.value.shape());
    return n.grad;
  }

  /// Gradient accumulator of node `id`, allocated on first use. For op backward closures.
  Tensor<Scalar>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor<Scalar>(n.value.shape());
    return n.grad;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor<Scalar>& value_of(std::size_t id) const { return nodes_[id].value; }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_[id].inputs; }

  void backward(Var loss) {
    check(loss);
    if (nodes_[loss.id].value.size() != 1) throw ContractError("backward() requires a scalar loss");
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)[0] += Scalar(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.op == OpKind::leaf || n.grad.size() == 0) continue;
      n.backward(*this, i);
      n.grad = Tensor<Scalar>();
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad = Tensor<Scalar>();
  }

 private:
  void check(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  }

  std::vector<Node> nodes_;
};

}  // namespace dunet
