#ifndef NSG_AUTODIFF_TAPE_HPP
#define NSG_AUTODIFF_TAPE_HPP

#include <functional>
#include <utility>
#include <vector>

#include "nsg/core/tensor.hpp"

namespace nsg {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<Scalar>& val() const;
  Scalar item() const { return val().item(); }
  const std::vector<int>& shape() const { return val().shape; }
};

/// Reverse-mode tape. Nodes are created in topological order, so backward is
/// a single reverse sweep. Gradients are accumulated lazily; a node whose
/// gradient was never touched is skipped, which keeps multi-phase training
/// steps (critic update, then generator update on the same tape) cheap.
template <typename Scalar>
class Tape {
 public:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool grad_set = false;
    bool needs_grad = false;
    std::function<void(Tape&)> backprop;  // empty for leaves/constants
  };

  Var<Scalar> leaf(Tensor<Scalar> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), {}, false, needs_grad, nullptr});
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  Var<Scalar> make(Tensor<Scalar> value, bool needs_grad, std::function<void(Tape&)> fn) {
    nodes_.push_back(Node{std::move(value), {}, false, needs_grad, std::move(fn)});
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<Scalar>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }

  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  /// Gradient buffer of a node, allocated (zeroed) on first touch.
  Tensor<Scalar>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_set) {
      n.grad.shape = n.value.shape;
      n.grad.data.setZero(n.value.data.size());
      n.grad_set = true;
    }
    return n.grad;
  }

  bool grad_set(int id) const { return nodes_[static_cast<size_t>(id)].grad_set; }

  /// Reverse sweep from a scalar loss node. Gradients accumulate on top of
  /// whatever is already set; call zero_grads() between independent passes.
  void backward(const Var<Scalar>& loss) {
    if (loss.tape != this) throw ShapeError("backward: loss lives on a different tape");
    if (value(loss.id).numel() != 1) throw ShapeError("backward: loss is not scalar");
    grad(loss.id).data[0] += Scalar(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.grad_set || !n.backprop) continue;
      n.backprop(*this);
    }
  }

  void zero_grads() {
    for (Node& n : nodes_) {
      n.grad_set = false;
      n.grad = Tensor<Scalar>{};
    }
  }

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::val() const {
  return tape->value(id);
}

}  // namespace nsg

#endif
