#pragma once

#include <cstddef>
#include <string>

namespace pprec::core::kernels {

// All backends follow one accumulation contract so results are bit-identical
// across them:
//   - gemm_* accumulate over the shared index in ascending order per output
//     element, with separate multiply and add (no FMA);
//   - dot/sum split the input into four interleaved partial sums s0..s3
//     (element i feeds s[i % 4]), reduce as (s0 + s1) + (s2 + s3), then fold
//     the tail elements in sequentially.
// Equivalence tests assert exact equality, not tolerance.

struct Kernels {
  // c = (accumulate ? c : 0) + a * b;  a: m x k, b: k x n, c: m x n.
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c = (accumulate ? c : 0) + a^T * b;  a: k x m, b: k x n, c: m x n.
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c = (accumulate ? c : 0) + a * b^T;  a: m x k, b: n x k, c: m x n.
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);

  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double alpha, double* out, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
};

enum class Backend { scalar, avx2, neon };

std::string backend_name(Backend b);
Backend parse_backend(const std::string& name);

bool available(Backend b);
// Reference tables.
const Kernels& get(Backend b);

// Active table: best available backend, overridable via PPREC_KERNELS
// (scalar|avx2|neon) or set_backend().
Backend active_backend();
const Kernels& active();
void set_backend(Backend b);

}  // namespace pprec::core::kernels
