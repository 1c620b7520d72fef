// NEON variants for aarch64. float64x2 lanes are paired (acc01 carries
// elements i, i+1 and acc23 carries i+2, i+3 of each 4-wide step) so the
// reduction tree matches the scalar and AVX2 kernels bit for bit.

#include "pprec/core/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstring>

namespace pprec::core::kernels {
namespace {

void zero(double* p, std::size_t n) { std::memset(p, 0, n * sizeof(double)); }

void neon_add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t main = n - n % 2;
  for (std::size_t i = 0; i < main; i += 2) {
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] + b[i];
}

void neon_sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t main = n - n % 2;
  for (std::size_t i = 0; i < main; i += 2) {
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] - b[i];
}

void neon_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t main = n - n % 2;
  for (std::size_t i = 0; i < main; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] * b[i];
}

void neon_scale(const double* a, double alpha, double* out, std::size_t n) {
  float64x2_t va = vdupq_n_f64(alpha);
  std::size_t main = n - n % 2;
  for (std::size_t i = 0; i < main; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), va));
  }
  for (std::size_t i = main; i < n; ++i) out[i] = a[i] * alpha;
}

void neon_axpy(double alpha, const double* x, double* y, std::size_t n) {
  float64x2_t va = vdupq_n_f64(alpha);
  std::size_t main = n - n % 2;
  for (std::size_t i = 0; i < main; i += 2) {
    float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (std::size_t i = main; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double neon_dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double total = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
                 (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (std::size_t i = main; i < n; ++i) total += a[i] * b[i];
  return total;
}

double neon_sum(const double* a, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    acc01 = vaddq_f64(acc01, vld1q_f64(a + i));
    acc23 = vaddq_f64(acc23, vld1q_f64(a + i + 2));
  }
  double total = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
                 (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (std::size_t i = main; i < n; ++i) total += a[i];
  return total;
}

void neon_gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) zero(crow, n);
    const double* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      neon_axpy(arow[l], b + l * n, crow, n);
    }
  }
}

void neon_gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) zero(crow, n);
    for (std::size_t l = 0; l < k; ++l) {
      neon_axpy(a[l * m + i], b + l * n, crow, n);
    }
  }
}

void neon_gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double v = neon_dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

}  // namespace

const Kernels& neon_kernels() {
  static const Kernels table = {
      neon_gemm_nn, neon_gemm_tn, neon_gemm_nt, neon_add, neon_sub,
      neon_mul,     neon_scale,   neon_axpy,    neon_dot, neon_sum,
  };
  return table;
}

}  // namespace pprec::core::kernels

#endif  // __aarch64__
