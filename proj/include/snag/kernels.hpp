#pragma once

// Dense double-precision inner loops used by the tensor core.
//
// Every kernel exists as a scalar reference implementation and, on x86-64
// builds, as an AVX2/FMA variant. The active table is chosen once at first
// use: AVX2 when the CPU reports avx2+fma, scalar otherwise. The environment
// variable SNAG_SIMD=scalar|avx2|auto overrides the choice.

#include <cstddef>
#include <string_view>

namespace snag::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  std::string_view name;

  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // sum_i x[i] * y[i]
  double (*dot)(std::size_t n, const double* x, const double* y);
  // z[i] = x[i] * y[i]
  void (*mul)(std::size_t n, const double* x, const double* y, double* z);
  // y[i] += x[i] * w[i]
  void (*mul_acc)(std::size_t n, const double* x, const double* w, double* y);
  // y[i] = max(y[i], x[i])
  void (*max_inplace)(std::size_t n, const double* x, double* y);

  // Row-major GEMM, all accumulating into C (C += op(A) * op(B)).
  // nn: C[m,n] += A[m,k] B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, const double* b, double* c);
  // tn: C[m,n] += A[k,m]^T B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, const double* b, double* c);
  // nt: C[m,n] += A[m,k] B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n,
                  const double* a, const double* b, double* c);
};

const KernelTable& scalar_table();

// nullptr when the AVX2 translation unit is not compiled in or the running
// CPU lacks avx2/fma.
const KernelTable* avx2_table();

// Table used by the tensor core.
const KernelTable& active();

// Force a backend; returns false (and leaves the selection unchanged) if the
// requested backend is unavailable.
bool select(Backend backend);

}  // namespace snag::kernels
