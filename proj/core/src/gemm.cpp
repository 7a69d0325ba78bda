#include <Eigen/Core>

#include "sflab/ops.hpp"

namespace sflab {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

}  // namespace

void gemm_abt(const float* a, const float* b, float* c, std::int64_t m, std::int64_t n,
              std::int64_t k, bool accumulate) {
  ConstMap A(a, m, k);
  ConstMap B(b, n, k);
  MutMap C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

void gemm_ab(const float* a, const float* b, float* c, std::int64_t m, std::int64_t n,
             std::int64_t k, bool accumulate) {
  ConstMap A(a, m, k);
  ConstMap B(b, k, n);
  MutMap C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

void gemm_atb(const float* a, const float* b, float* c, std::int64_t m, std::int64_t n,
              std::int64_t k, bool accumulate) {
  ConstMap A(a, k, m);
  ConstMap B(b, k, n);
  MutMap C(c, m, n);
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

}  // namespace sflab
