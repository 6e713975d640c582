#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include "zfs/nn/tensor.hpp"

namespace zfs::nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

/// C = alpha * op(A) * op(B) + beta * C, row-major buffers.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  EMap<T> C(c, m, n);
  if (beta == T(0)) {
    C.setZero();
  } else if (beta != T(1)) {
    C *= beta;
  }
  if (!trans_a && !trans_b) {
    C.noalias() += alpha * ECMap<T>(a, m, k) * ECMap<T>(b, k, n);
  } else if (trans_a && !trans_b) {
    C.noalias() += alpha * ECMap<T>(a, k, m).transpose() * ECMap<T>(b, k, n);
  } else if (!trans_a && trans_b) {
    C.noalias() += alpha * ECMap<T>(a, m, k) * ECMap<T>(b, n, k).transpose();
  } else {
    C.noalias() += alpha * ECMap<T>(a, k, m).transpose() * ECMap<T>(b, n, k).transpose();
  }
}

/// out[m,n] = a[m,k] * b[k,n]
template <typename T>
Tensor<T> matmul_raw(const Tensor<T>& a, const Tensor<T>& b) {
  ZFS_CHECK(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0), "matmul shape mismatch");
  Tensor<T> out({a.dim(0), b.dim(1)});
  gemm<T>(false, false, a.dim(0), b.dim(1), a.dim(1), T(1), a.data(), b.data(), T(0), out.data());
  return out;
}

}  // namespace zfs::nn
