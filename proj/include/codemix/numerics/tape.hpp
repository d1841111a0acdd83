#pragma once
// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every op executed through it in creation order. Inputs of a
// node always have smaller ids than the node, so backward() is a single pass
// over the ids in reverse. Tapes are rebuilt for every forward pass and are
// single-threaded; independent tapes may live on different threads.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "codemix/numerics/tensor.hpp"

namespace codemix {

// A named trainable tensor with its gradient accumulator. Lives outside any
// tape; tapes borrow the value and add into grad on backward().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Called with the tape and the id of the node being differentiated; reads
  // grad(self) and accumulates into the grads of the node's inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  // With grad disabled, ops compute values only and record no closures.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  // Leaf owning its value; its gradient is read back with grad().
  Var input(Tensor value, bool requires_grad = true);
  // Leaf borrowing a parameter; backward() adds into param.grad.
  Var parameter(Parameter& param);
  // Leaf borrowing an external tensor without tracking gradients.
  Var view(const Tensor& value);

  // Appends an op node. requires_grad is inherited from the inputs.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  // Runs reverse accumulation from a scalar node. Gradients from a previous
  // backward() on this tape are discarded first.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient of a node after backward(); zeros when the node is off every path
  // to the loss.
  Tensor grad(Var v) const;

  // Lazily allocated accumulator, for use inside BackwardFn.
  Tensor& grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace codemix
