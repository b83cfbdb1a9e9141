#include "pdt/gemm.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace pdt {
namespace {

struct SingleThreadInit {
  SingleThreadInit() {
    // Multi-threaded BLAS splits reductions nondeterministically; one thread
    // keeps every accumulation order fixed.
    openblas_set_num_threads(1);
  }
};
const SingleThreadInit kInit;

}  // namespace

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                  const double* a, int lda, const double* b, int ldb,
                  double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace pdt
