#pragma once

#include <cstddef>

namespace snag::kernels {

#define SNAG_KERNEL_DECLS                                                      \
  void axpy(std::size_t n, double a, const double* x, double* y);             \
  double dot(std::size_t n, const double* x, const double* y);                \
  void mul(std::size_t n, const double* x, const double* y, double* z);       \
  void mul_acc(std::size_t n, const double* x, const double* w, double* y);   \
  void max_inplace(std::size_t n, const double* x, double* y);                \
  void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,  \
               const double* b, double* c);                                   \
  void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,  \
               const double* b, double* c);                                   \
  void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,  \
               const double* b, double* c);

namespace scalar {
SNAG_KERNEL_DECLS
}

namespace avx2 {
SNAG_KERNEL_DECLS
}

#undef SNAG_KERNEL_DECLS

}  // namespace snag::kernels
