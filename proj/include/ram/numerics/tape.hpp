// SPDX-License-Identifier: Apache-2.0
// Reverse-mode differentiation over an explicit operation record.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ram/numerics/tensor.hpp"

namespace ram {

/// A named trainable tensor. Its address is its identity in gradient maps.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(int axis) const { return value().dim(axis); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Result of Tape::backward. Gradients of unreachable parameters are exact zeros.
class Gradients {
 public:
  /// d loss / d param; zeros of the parameter's shape if it never reached the loss.
  Tensor of(const Parameter& param) const;
  /// d loss / d leaf, for leaves created with requires_grad.
  Tensor of(const Var& leaf) const;

  const std::unordered_map<const Parameter*, Tensor>& by_parameter() const { return params_; }

 private:
  friend class Tape;
  std::unordered_map<const Parameter*, Tensor> params_;
  std::vector<Tensor> nodes_;
  std::vector<Shape> shapes_;
};

/// Gives a backward closure access to its output gradient and its inputs' accumulators.
class BackwardContext {
 public:
  const Tensor& grad_output() const { return *grad_out_; }
  const Tensor& value(const Var& v) const { return v.value(); }
  /// Gradient accumulator for `input`; nullptr when that input does not need a gradient.
  Tensor* grad(const Var& input);

 private:
  friend class Tape;
  BackwardContext(Tape* tape, const Tensor* g) : tape_(tape), grad_out_(g) {}
  Tape* tape_;
  const Tensor* grad_out_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Tape {
 public:
  enum class Mode { record, no_grad };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never carries a gradient.
  Var constant(Tensor value);
  /// Leaf input; with requires_grad its gradient is available via Gradients::of(Var).
  Var input(Tensor value, bool requires_grad);
  /// Leaf bound to a parameter without copying its value. The parameter must outlive the tape.
  Var param(const Parameter& p);

  /// Records an op output. `backward` is kept only if some input requires a gradient.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var push(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  Gradients backward(const Var& loss);

  Mode mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }
  /// Number of ops holding a backward closure.
  std::size_t recorded_ops() const { return recorded_; }

 private:
  friend class Var;
  friend class BackwardContext;

  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    const Tensor& get() const { return external ? *external : value; }
  };

  Var make(Node node);
  void check_owner(const Var& v) const;

  Mode mode_;
  std::vector<Node> nodes_;
  std::size_t recorded_ = 0;
  std::vector<Tensor>* grads_ = nullptr;  // live only during backward()
};

}  // namespace ram
