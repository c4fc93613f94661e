#pragma once

#include <cstdint>

namespace acwm::core {

// Row-major single-precision matrix multiply-accumulate primitives.
// Accumulation order is fixed (k innermost ascending), so results are
// deterministic for a given build.

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);

}  // namespace acwm::core
