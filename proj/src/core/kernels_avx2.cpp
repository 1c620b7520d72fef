// AVX2 variants. Compiled with -mavx2 on x86_64 only; callers go through the
// runtime dispatch in kernels_dispatch.cpp, which checks CPU support first.
//
// Multiplies and adds stay separate (no FMA) and reductions use the shared
// four-lane convention, so every result is bit-identical to the scalar
// reference kernels.

#include "pprec/core/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

#include <cstring>

namespace pprec::core::kernels {
namespace {

void zero(double* p, std::size_t n) { std::memset(p, 0, n * sizeof(double)); }

void avx2_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] + b[i];
}

void avx2_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] - b[i];
}

void avx2_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] * b[i];
}

void avx2_scale(const double* a, double alpha, double* out, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), va));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] * alpha;
}

void avx2_axpy(double alpha, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (std::size_t i = main; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double reduce_lanes(__m256d acc) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double avx2_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  double total = reduce_lanes(acc);
  for (std::size_t i = main; i < n; ++i) total += a[i] * b[i];
  return total;
}

double avx2_sum(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  }
  double total = reduce_lanes(acc);
  for (std::size_t i = main; i < n; ++i) total += a[i];
  return total;
}

void avx2_gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) zero(crow, n);
    const double* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      avx2_axpy(arow[l], b + l * n, crow, n);
    }
  }
}

void avx2_gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) zero(crow, n);
    for (std::size_t l = 0; l < k; ++l) {
      avx2_axpy(a[l * m + i], b + l * n, crow, n);
    }
  }
}

void avx2_gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double v = avx2_dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels table = {
      avx2_gemm_nn, avx2_gemm_tn, avx2_gemm_nt, avx2_add, avx2_sub,
      avx2_mul,     avx2_scale,   avx2_axpy,    avx2_dot, avx2_sum,
  };
  return table;
}

}  // namespace pprec::core::kernels

#endif  // __x86_64__ && __AVX2__
