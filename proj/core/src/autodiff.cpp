#include "sflab/autodiff.hpp"

namespace sflab {

const Tensor& Var::value() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->requires_grad(*this);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw Error("Var does not belong to this tape");
  }
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& p : parents) {
    check_owned(p);
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

bool Tape::requires_grad(const Var& v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

const Tensor& Gradients::of(const Var& v) const {
  if (v.tape() != tape_ || v.id() < 0 || static_cast<std::size_t>(v.id()) >= grads_.size()) {
    throw Error("gradient requested for a tensor that is not on this tape");
  }
  if (!tape_->requires_grad(v)) {
    throw Error("gradient requested for a constant (node " + std::to_string(v.id()) + ")");
  }
  auto& g = grads_[static_cast<std::size_t>(v.id())];
  if (g.empty()) g = Tensor::zeros(tape_->value(v).shape());
  return g;
}

Gradients backward(const Tape& tape, const Var& loss) {
  tape.check_owned(loss);
  const auto& loss_value = tape.value(loss);
  if (loss_value.numel() != 1) {
    throw Error("backward requires a scalar loss, got shape " + to_string(loss_value.shape()));
  }
  std::vector<Tensor> grads(tape.nodes_.size());
  grads[static_cast<std::size_t>(loss.id())] = Tensor::ones(loss_value.shape());

  std::vector<Tensor*> parent_slots;
  for (int i = loss.id(); i >= 0; --i) {
    const auto& node = tape.nodes_[static_cast<std::size_t>(i)];
    auto& g = grads[static_cast<std::size_t>(i)];
    if (g.empty() || !node.backward) continue;
    parent_slots.clear();
    for (int p : node.parents) {
      const auto& parent = tape.nodes_[static_cast<std::size_t>(p)];
      if (!parent.requires_grad) {
        parent_slots.push_back(nullptr);
        continue;
      }
      auto& pg = grads[static_cast<std::size_t>(p)];
      if (pg.empty()) pg = Tensor::zeros(parent.value.shape());
      parent_slots.push_back(&pg);
    }
    node.backward(tape, g, parent_slots);
  }
  return Gradients(&tape, std::move(grads));
}

}  // namespace sflab
