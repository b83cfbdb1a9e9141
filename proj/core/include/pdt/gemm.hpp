#pragma once

namespace pdt {

// C (m x n) = alpha * op(A) * op(B) + beta * C, row-major, with
// op(A) = A (m x k) or A^T when transposed. Backed by a BLAS sgemm/dgemm
// pinned to a single thread so results are bitwise reproducible run to run.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc);

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc);
template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k,
                  double alpha, const double* a, int lda, const double* b,
                  int ldb, double beta, double* c, int ldc);

}  // namespace pdt
