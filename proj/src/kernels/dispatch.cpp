#include "snag/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernel_impl.hpp"

namespace snag::kernels {

namespace {

constexpr KernelTable kScalar{
    Backend::kScalar,  "scalar",         scalar::axpy,    scalar::dot,
    scalar::mul,       scalar::mul_acc,  scalar::max_inplace,
    scalar::gemm_nn,   scalar::gemm_tn,  scalar::gemm_nt,
};

#if defined(SNAG_HAVE_AVX2_TU)
constexpr KernelTable kAvx2{
    Backend::kAvx2,  "avx2",         avx2::axpy,    avx2::dot,
    avx2::mul,       avx2::mul_acc,  avx2::max_inplace,
    avx2::gemm_nn,   avx2::gemm_tn,  avx2::gemm_nt,
};

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* initial_choice() {
  const KernelTable* simd = avx2_table();
  const char* env = std::getenv("SNAG_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return &kScalar;
  if (simd != nullptr) return simd;
  return &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_choice()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(SNAG_HAVE_AVX2_TU)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(Backend backend) {
  const KernelTable* t = backend == Backend::kScalar ? &kScalar : avx2_table();
  if (t == nullptr) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace snag::kernels
