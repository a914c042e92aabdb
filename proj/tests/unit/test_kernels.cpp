#include <doctest.h>

#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "snag/kernels.hpp"

using namespace snag::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* simd = avx2_table();
  if (!simd) {
    MESSAGE("AVX2 table unavailable on this machine; nothing to compare");
    return;
  }
  const KernelTable& ref = scalar_table();
  std::mt19937_64 rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 13u, 31u, 64u, 101u}) {
    auto x = rand_vec(n, rng), y = rand_vec(n, rng), w = rand_vec(n, rng);
    auto y1 = y, y2 = y;
    ref.axpy(n, 0.37, x.data(), y1.data());
    simd->axpy(n, 0.37, x.data(), y2.data());
    close(y1, y2, 1e-14);

    CHECK(ref.dot(n, x.data(), y.data()) == doctest::Approx(simd->dot(n, x.data(), y.data())).epsilon(1e-12));

    std::vector<double> z1(n), z2(n);
    ref.mul(n, x.data(), y.data(), z1.data());
    simd->mul(n, x.data(), y.data(), z2.data());
    CHECK(z1 == z2);

    y1 = y, y2 = y;
    ref.mul_acc(n, x.data(), w.data(), y1.data());
    simd->mul_acc(n, x.data(), w.data(), y2.data());
    close(y1, y2, 1e-14);

    y1 = y, y2 = y;
    ref.max_inplace(n, x.data(), y1.data());
    simd->max_inplace(n, x.data(), y2.data());
    CHECK(y1 == y2);
  }
}

TEST_CASE("avx2 max keeps std::max semantics on ties and signed zeros") {
  const KernelTable* simd = avx2_table();
  if (!simd) return;
  std::vector<double> x{0.0, -0.0, 1.0, 2.0, -3.0};
  std::vector<double> a{-0.0, 0.0, 1.0, 1.0, -4.0}, b = a;
  scalar_table().max_inplace(x.size(), x.data(), a.data());
  simd->max_inplace(x.size(), x.data(), b.data());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::signbit(a[i]) == std::signbit(b[i]));
  CHECK(a == b);
}

TEST_CASE("avx2 gemm variants agree with the scalar reference") {
  const KernelTable* simd = avx2_table();
  if (!simd) return;
  const KernelTable& ref = scalar_table();
  std::mt19937_64 rng(11);
  for (auto [m, k, n] : std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{
           {1, 1, 1}, {2, 3, 4}, {7, 5, 9}, {16, 16, 16}, {13, 29, 3}, {3, 64, 33}}) {
    auto a = rand_vec(m * k, rng), b = rand_vec(k * n, rng), c = rand_vec(m * n, rng);
    auto c1 = c, c2 = c;
    ref.gemm_nn(m, k, n, a.data(), b.data(), c1.data());
    simd->gemm_nn(m, k, n, a.data(), b.data(), c2.data());
    close(c1, c2, 1e-12);

    auto at = rand_vec(k * m, rng);
    c1 = c, c2 = c;
    ref.gemm_tn(m, k, n, at.data(), b.data(), c1.data());
    simd->gemm_tn(m, k, n, at.data(), b.data(), c2.data());
    close(c1, c2, 1e-12);

    auto bt = rand_vec(n * k, rng);
    c1 = c, c2 = c;
    ref.gemm_nt(m, k, n, a.data(), bt.data(), c1.data());
    simd->gemm_nt(m, k, n, a.data(), bt.data(), c2.data());
    close(c1, c2, 1e-12);
  }
}

TEST_CASE("scalar gemm matches a naive triple loop") {
  std::mt19937_64 rng(3);
  const std::size_t m = 4, k = 6, n = 5;
  auto a = rand_vec(m * k, rng), b = rand_vec(k * n, rng);
  std::vector<double> c(m * n, 0.0), want(m * n, 0.0);
  scalar_table().gemm_nn(m, k, n, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) want[i * n + j] += a[i * k + p] * b[p * n + j];
  close(c, want, 1e-13);
}

TEST_CASE("backend selection") {
  const Backend before = active().backend;
  CHECK(select(Backend::kScalar));
  CHECK(active().backend == Backend::kScalar);
  if (avx2_table()) {
    CHECK(select(Backend::kAvx2));
    CHECK(active().name == "avx2");
  } else {
    CHECK_FALSE(select(Backend::kAvx2));
  }
  select(before);
}
