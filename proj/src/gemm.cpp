#include "adscreen/gemm.hpp"

#include <vector>

#ifdef ADSCREEN_HAVE_CBLAS
#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace adscreen {

namespace {
// Reproducibility contract: all parallelism lives above the kernels, so BLAS
// must stay single-threaded regardless of the machine it runs on.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace adscreen

#else  // fallback

namespace adscreen {

namespace {

template <typename T>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
               const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] *= beta;
  }
  // Pack op(B) rows contiguously so the inner loop streams.
  std::vector<T> brow(static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    if (trans_b) {
      for (int j = 0; j < n; ++j) brow[j] = b[static_cast<size_t>(j) * ldb + p];
    } else {
      const T* src = b + static_cast<size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) brow[j] = src[j];
    }
    for (int i = 0; i < m; ++i) {
      const T av = trans_a ? a[static_cast<size_t>(p) * lda + i] : a[static_cast<size_t>(i) * lda + p];
      const T s = alpha * av;
      if (s == T(0)) continue;
      T* crow = c + static_cast<size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace adscreen

#endif
