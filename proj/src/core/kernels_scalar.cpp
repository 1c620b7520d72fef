#include <cstddef>
#include <cstring>

#include "pprec/core/kernels.hpp"

namespace pprec::core::kernels {
namespace {

void zero(double* p, std::size_t n) { std::memset(p, 0, n * sizeof(double)); }

void scalar_add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void scalar_sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scalar_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scalar_scale(const double* a, double alpha, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * alpha;
}

void scalar_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

// Blocked reduction; see the contract in kernels.hpp.
double scalar_dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double total = (s0 + s1) + (s2 + s3);
  for (std::size_t i = main; i < n; ++i) total += a[i] * b[i];
  return total;
}

double scalar_sum(const double* a, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  double total = (s0 + s1) + (s2 + s3);
  for (std::size_t i = main; i < n; ++i) total += a[i];
  return total;
}

void scalar_gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) zero(crow, n);
    const double* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      scalar_axpy(arow[l], b + l * n, crow, n);
    }
  }
}

void scalar_gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) zero(crow, n);
    for (std::size_t l = 0; l < k; ++l) {
      scalar_axpy(a[l * m + i], b + l * n, crow, n);
    }
  }
}

void scalar_gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double v = scalar_dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table = {
      scalar_gemm_nn, scalar_gemm_tn, scalar_gemm_nt, scalar_add, scalar_sub,
      scalar_mul,     scalar_scale,   scalar_axpy,    scalar_dot, scalar_sum,
  };
  return table;
}

}  // namespace pprec::core::kernels
