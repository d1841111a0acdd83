#pragma once
// Dense double-precision kernels behind the autodiff layer.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active table is chosen once at startup from the CPU
// feature bits; CODEMIX_KERNELS=scalar|avx2 overrides the choice.
//
// Matrix kernels compute every output row independently with a fixed
// summation order over the inner dimension, so a row of a batched product is
// bit-identical to the same row computed alone. The streaming decoder relies
// on this.

#include <cstddef>
#include <string_view>

namespace codemix::kernels {

struct KernelTable {
  std::string_view name;

  // C[m x n] (+)= A[m x k] * B[k x n], row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate);
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate);
  // C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // out = x + y (out may alias x or y)
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  // out = x * y elementwise
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // y += x * z elementwise
  void (*mul_acc)(std::size_t n, const double* x, const double* z, double* y);
  void (*scale)(std::size_t n, double alpha, double* x);

  // Adam moment update and parameter step with precomputed bias corrections:
  //   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
  //   p -= step_size * m / (sqrt(v / bc2) + eps)
  void (*adam_update)(std::size_t n, double* param, const double* grad,
                      double* m, double* v, double beta1, double beta2,
                      double step_size, double bias_correction2, double eps);
};

const KernelTable& scalar_table();
// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table in use for this process.
const KernelTable& active();

// Replaces the active table; used by tests and benchmarks.
void set_active(const KernelTable& table);

}  // namespace codemix::kernels
