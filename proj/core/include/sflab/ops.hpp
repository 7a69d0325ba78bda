#pragma once

#include <cstdint>
#include <span>

#include "sflab/autodiff.hpp"
#include "sflab/tensor.hpp"

namespace sflab {

/// Raised when a forward value (typically the loss) overflows.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Running statistics of one batch-normalization layer.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

  explicit BatchNormState(std::int64_t channels = 0)
      : running_mean(Shape{channels > 0 ? channels : 1}, 0.0f),
        running_var(Shape{channels > 0 ? channels : 1}, 1.0f) {}
};

// Non-differentiable kernels.

/// Cross-correlation (no kernel flip). input [N,Cin,H,W], kernels [Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding);

/// C (row-major [m,n]) = A [m,k] * B^T where B is [n,k].
void gemm_abt(const float* a, const float* b, float* c, std::int64_t m, std::int64_t n,
              std::int64_t k, bool accumulate);
/// C [m,n] = A [m,k] * B [k,n].
void gemm_ab(const float* a, const float* b, float* c, std::int64_t m, std::int64_t n,
             std::int64_t k, bool accumulate);
/// C [m,n] = A^T * B where A is [k,m] and B is [k,n].
void gemm_atb(const float* a, const float* b, float* c, std::int64_t m, std::int64_t n,
              std::int64_t k, bool accumulate);

namespace ops {

Var conv2d(const Var& input, const Var& kernels, int stride, int padding);
Var add(const Var& a, const Var& b);
/// x + s elementwise.
Var add_scalar(const Var& x, float s);
Var relu(const Var& x);
/// Square window max pooling; ties resolve to the first maximal element.
Var max_pool(const Var& x, int window, int stride);
/// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& x);
/// Per-channel normalization of [N,C,H,W]. Training mode normalizes with
/// biased batch statistics and folds the unbiased variance into `state`;
/// eval mode uses the running statistics.
Var batch_norm(const Var& x, const Var& scale, const Var& shift, BatchNormState& state,
               bool training);
/// x [N,F], weight [K,F], bias [K] -> [N,K]
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Mean cross-entropy of softmax(logits [N,K]) against integer labels.
Var softmax_xent(const Var& logits, std::span<const int> labels);
/// Sum of all elements, shape [1].
Var sum(const Var& x);
Var reshape(const Var& x, Shape shape);

}  // namespace ops

/// Row-wise softmax probabilities for [N,K] logits (no tape).
Tensor softmax(const Tensor& logits);
/// argmax per row of [N,K]; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace sflab
