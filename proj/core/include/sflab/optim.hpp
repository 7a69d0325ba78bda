#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sflab/rng.hpp"
#include "sflab/tensor.hpp"

namespace sflab {

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Moment buffers for a fixed, ordered list of parameters.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig config, std::span<const Shape> param_shapes);

  const AdamConfig& config() const noexcept { return config_; }
  std::int64_t steps() const noexcept { return steps_; }
  const std::vector<Tensor>& first_moment() const noexcept { return m_; }
  const std::vector<Tensor>& second_moment() const noexcept { return v_; }

 private:
  friend void adam_step(AdamState&, std::span<Tensor* const>, std::span<const Tensor* const>);

  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// One bias-corrected Adam update. Rejects the whole step, leaving params and
/// state untouched, if any gradient entry is non-finite.
void adam_step(AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor* const> grads);

/// Uniform samples on [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_init(Rng& rng, Shape shape, std::int64_t fan_in, std::int64_t fan_out);

}  // namespace sflab
