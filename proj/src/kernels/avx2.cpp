// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma
// -ffp-contract=off; only the explicit _mm256_fmadd_pd calls fuse.

#include "codemix/kernels/kernels.hpp"

#include <cmath>

#if defined(CODEMIX_HAVE_AVX2)
#include <immintrin.h>

namespace codemix::kernels {
namespace {

inline __m256d load_or_zero(const double* p, bool load) {
  return load ? _mm256_loadu_pd(p) : _mm256_setzero_pd();
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Row-blocked update: crow[0..n) (+)= sum_p coef(p) * brow(p)[0..n).
// coef_stride selects A (stride 1) or A^T (stride lda) access.
inline void row_update(std::size_t n, std::size_t k, const double* coef,
                       std::size_t coef_stride, const double* b,
                       std::size_t ldb, double* crow, bool accumulate) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = load_or_zero(crow + j, accumulate);
    __m256d c1 = load_or_zero(crow + j + 4, accumulate);
    __m256d c2 = load_or_zero(crow + j + 8, accumulate);
    __m256d c3 = load_or_zero(crow + j + 12, accumulate);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d a = _mm256_broadcast_sd(coef + p * coef_stride);
      const double* brow = b + p * ldb + j;
      c0 = _mm256_fmadd_pd(a, _mm256_loadu_pd(brow), c0);
      c1 = _mm256_fmadd_pd(a, _mm256_loadu_pd(brow + 4), c1);
      c2 = _mm256_fmadd_pd(a, _mm256_loadu_pd(brow + 8), c2);
      c3 = _mm256_fmadd_pd(a, _mm256_loadu_pd(brow + 12), c3);
    }
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
    _mm256_storeu_pd(crow + j + 8, c2);
    _mm256_storeu_pd(crow + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = load_or_zero(crow + j, accumulate);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d a = _mm256_broadcast_sd(coef + p * coef_stride);
      c0 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b + p * ldb + j), c0);
    }
    _mm256_storeu_pd(crow + j, c0);
  }
  for (; j < n; ++j) {
    double s = accumulate ? crow[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p)
      s = std::fma(coef[p * coef_stride], b[p * ldb + j], s);
    crow[j] = s;
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    row_update(n, k, a + i * lda, 1, b, ldb, c + i * ldc, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    row_update(n, k, a + i, lda, b, ldb, c + i * ldc, accumulate);
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                         _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = dot(k, arow, b + j * ldb);
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc(std::size_t n, const double* x, const double* z, double* y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(z + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(x[i], z[i], y[i]);
}

void scale(std::size_t n, double alpha, double* x) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

// Unfused on purpose: matches the scalar reference bit for bit.
void adam_update(std::size_t n, double* param, const double* grad, double* m,
                 double* v, double beta1, double beta2, double step_size,
                 double bias_correction2, double eps) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d ss = _mm256_set1_pd(step_size);
  const __m256d bc2 = _mm256_set1_pd(bias_correction2);
  const __m256d ve = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(omb1, g));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                      _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_div_pd(vi, bc2)), ve);
    const __m256d upd = _mm256_mul_pd(ss, _mm256_div_pd(mi, denom));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), upd));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    const double mi = beta1 * m[i] + (1.0 - beta1) * g;
    const double vi = beta2 * v[i] + (1.0 - beta2) * (g * g);
    m[i] = mi;
    v[i] = vi;
    const double denom = std::sqrt(vi / bias_correction2) + eps;
    param[i] -= step_size * (mi / denom);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{
      "avx2", gemm_nn, gemm_nt, gemm_tn, axpy,    dot,
      add,    mul,     mul_acc, scale,   adam_update,
  };
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma"))
    return nullptr;
  return &table;
}

}  // namespace codemix::kernels

#else

namespace codemix::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace codemix::kernels

#endif
