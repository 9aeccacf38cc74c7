// SPDX-License-Identifier: Apache-2.0
#include "ram/numerics/tape.hpp"

#include <cassert>

namespace ram {

const Tensor& Var::value() const {
  assert(tape_ != nullptr);
  return tape_->nodes_[static_cast<std::size_t>(id_)].get();
}

bool Var::requires_grad() const { return tape_->nodes_[static_cast<std::size_t>(id_)].requires_grad; }

Tensor Gradients::of(const Parameter& param) const {
  if (auto it = params_.find(&param); it != params_.end()) return it->second;
  return Tensor(param.value.shape());
}

Tensor Gradients::of(const Var& leaf) const {
  const auto i = static_cast<std::size_t>(leaf.id());
  if (i < nodes_.size() && nodes_[i].numel() == shape_numel(shapes_[i])) return nodes_[i];
  return Tensor(leaf.shape());
}

Tensor* BackwardContext::grad(const Var& input) {
  const auto i = static_cast<std::size_t>(input.id());
  if (!tape_->nodes_[i].requires_grad) return nullptr;
  Tensor& g = (*tape_->grads_)[i];
  if (g.numel() == 0 && tape_->nodes_[i].get().numel() != 0) g = Tensor(tape_->nodes_[i].get().shape());
  return &g;
}

Var Tape::make(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

void Tape::check_owner(const Var& v) const {
  if (&v.tape() != this) throw std::logic_error("tape: variable belongs to a different tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return make(std::move(n));
}

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && mode_ == Mode::record;
  return make(std::move(n));
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = mode_ == Mode::record;
  return make(std::move(n));
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  if (mode_ == Mode::record) {
    for (const Var& v : inputs) {
      check_owner(v);
      n.requires_grad = n.requires_grad || v.requires_grad();
    }
    if (n.requires_grad) {
      n.backward = std::move(backward);
      ++recorded_;
    }
  }
  return make(std::move(n));
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  if (mode_ == Mode::record) {
    for (const Var& v : inputs) {
      check_owner(v);
      n.requires_grad = n.requires_grad || v.requires_grad();
    }
    if (n.requires_grad) {
      n.backward = std::move(backward);
      ++recorded_;
    }
  }
  return make(std::move(n));
}

Gradients Tape::backward(const Var& loss) {
  check_owner(loss);
  if (loss.value().numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  Gradients out;
  std::vector<Tensor> grads(nodes_.size());
  grads_ = &grads;
  const auto root = static_cast<std::size_t>(loss.id());
  if (nodes_[root].requires_grad) {
    grads[root] = Tensor(loss.shape(), Real(1));
    // Node ids are a topological order, so a reverse sweep visits each node once
    // after all of its consumers have contributed.
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || grads[i].numel() == 0) continue;
      BackwardContext ctx(this, &grads[i]);
      n.backward(ctx);
    }
  }
  grads_ = nullptr;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.param == nullptr || grads[i].numel() == 0) continue;
    auto [it, inserted] = out.params_.try_emplace(n.param, grads[i]);
    if (!inserted) {
      auto dst = it->second.data();
      auto src = grads[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  out.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) out.shapes_.push_back(n.get().shape());
  out.nodes_ = std::move(grads);
  return out;
}

}  // namespace ram
