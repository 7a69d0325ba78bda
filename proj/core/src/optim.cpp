#include "sflab/optim.hpp"

#include <cmath>

#include "sflab/ops.hpp"

namespace sflab {

AdamState::AdamState(AdamConfig config, std::span<const Shape> param_shapes) : config_(config) {
  for (const auto& s : param_shapes) {
    m_.emplace_back(s, 0.0f);
    v_.emplace_back(s, 0.0f);
  }
}

void adam_step(AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor* const> grads) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw Error("adam_step: " + std::to_string(params.size()) + " params, " +
                std::to_string(grads.size()) + " grads, state tracks " +
                std::to_string(state.m_.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m_[i].shape()) {
      throw Error("adam_step: shape mismatch at parameter " + std::to_string(i) + ": param " +
                  to_string(params[i]->shape()) + ", grad " + to_string(grads[i]->shape()));
    }
    if (!grads[i]->all_finite()) {
      throw NumericalError("adam_step: non-finite gradient for parameter " + std::to_string(i));
    }
  }

  const auto& c = state.config_;
  state.steps_ += 1;
  const auto t = static_cast<double>(state.steps_);
  const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
  const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));
  const float step_size = c.learning_rate / bc1;
  const float sqrt_bc2 = std::sqrt(bc2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) / sqrt_bc2 + c.eps);
    }
  }
}

Tensor glorot_init(Rng& rng, Shape shape, std::int64_t fan_in, std::int64_t fan_out) {
  if (fan_in <= 0 || fan_out <= 0) throw Error("glorot_init requires positive fan_in and fan_out");
  const float a = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace sflab
