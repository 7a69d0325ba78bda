#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sflab/tensor.hpp"

namespace sflab {

class Tape;
class Gradients;
class Var;
Gradients backward(const Tape& tape, const Var& loss);

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  int id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Backward rule for one recorded primitive. `parent_grads[i]` is null when
/// parent i does not need a gradient; otherwise the rule accumulates into it.
using BackwardFn = std::function<void(const Tape& tape, const Tensor& grad_out,
                                      std::span<Tensor* const> parent_grads)>;

/// Append-only record of primitive applications. Recording order is a valid
/// topological order, and backward() walks it strictly in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient can be requested.
  Var input(Tensor value);
  /// Leaf excluded from differentiation.
  Var constant(Tensor value);

  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Gradients;
  friend Gradients backward(const Tape& tape, const Var& loss);

  struct Node {
    Tensor value;
    std::vector<int> parents;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
};

/// Gradients of one scalar loss with respect to every differentiable node.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `v`. Nodes that require grad but do not
  /// influence the loss yield zeros. Throws for constants and foreign Vars.
  const Tensor& of(const Var& v) const;

 private:
  friend Gradients backward(const Tape& tape, const Var& loss);
  Gradients(const Tape* tape, std::vector<Tensor> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  const Tape* tape_;
  mutable std::vector<Tensor> grads_;
};

/// Reverse-mode sweep from a scalar (single-element) loss.
Gradients backward(const Tape& tape, const Var& loss);

}  // namespace sflab
