#include "codemix/numerics/tape.hpp"

#include "codemix/errors.hpp"
#include "codemix/kernels/kernels.hpp"

namespace codemix {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.borrowed = &param.value;
  n.requires_grad = grad_enabled_;
  n.param = &param;
  return push(std::move(n));
}

Var Tape::view(const Tensor& value) {
  Node n;
  n.borrowed = &value;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.id() >= nodes_.size() || &v.tape() != this)
        throw Error("op input does not belong to this tape");
      n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.id() >= nodes_.size() || &v.tape() != this)
        throw Error("op input does not belong to this tape");
      n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(value(v.id()).shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("loss does not belong to this tape");
  const Tensor& lv = value(loss.id());
  if (lv.numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " +
                         shape_string(lv.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
  const auto& k = kernels::active();
  for (Node& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    Parameter& p = *n.param;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    k.add(p.grad.numel(), p.grad.data(), n.grad.data(), p.grad.data());
  }
}

}  // namespace codemix
