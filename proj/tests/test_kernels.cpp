#include <doctest.h>

#include <cmath>
#include <vector>

#include "pfp/kernels.hpp"
#include "pfp/rng.hpp"

using namespace pfp;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform01();
  return v;
}

}  // namespace

TEST_CASE("scalar kernels match brute-force loops") {
  const auto& k = kernels::ops(kernels::Backend::Scalar);
  const std::vector<double> x = {1.0, -2.5, 3.25, 0.5};
  const std::vector<double> y = {2.0, 0.5, -1.0, 4.0};
  CHECK(k.sum(x.data(), 4) == doctest::Approx(2.25));
  CHECK(k.dot(x.data(), y.data(), 4) == doctest::Approx(2.0 - 1.25 - 3.25 + 2.0));
  std::vector<double> out(4);
  k.scale(out.data(), x.data(), 2.0, 4);
  CHECK(out == std::vector<double>{2.0, -5.0, 6.5, 1.0});
  k.axpy(out.data(), y.data(), 0.5, 4);
  CHECK(out[0] == doctest::Approx(3.0));
  k.recip_scale(out.data(), y.data(), 1.0, 4);
  CHECK(out[3] == doctest::Approx(0.25));
  CHECK(k.l1_residual(x.data(), y.data(), 0.0, 4) ==
        doctest::Approx(2.0 + 1.25 + 3.25 + 2.0));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!kernels::backend_available(kernels::Backend::Avx2)) {
    MESSAGE("avx2 unavailable on this machine; dispatch falls back to scalar");
    return;
  }
  const auto& scalar = kernels::ops(kernels::Backend::Scalar);
  const auto& simd = kernels::ops(kernels::Backend::Avx2);
  Rng rng(99);

  // Sizes chosen to cover empty input, sub-lane tails and lane multiples.
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 63u, 64u, 1000u, 1023u}) {
    const auto x = random_vec(rng, n, -3.0, 3.0);
    const auto y = random_vec(rng, n, 0.2, 5.0);

    CHECK(scalar.sum(x.data(), n) ==
          doctest::Approx(simd.sum(x.data(), n)).epsilon(1e-12));
    CHECK(scalar.dot(x.data(), y.data(), n) ==
          doctest::Approx(simd.dot(x.data(), y.data(), n)).epsilon(1e-12));
    CHECK(scalar.l1_residual(x.data(), y.data(), 0.3, n) ==
          doctest::Approx(simd.l1_residual(x.data(), y.data(), 0.3, n))
              .epsilon(1e-12));

    std::vector<double> a(n), b(n);
    scalar.scale(a.data(), x.data(), 1.7, n);
    simd.scale(b.data(), x.data(), 1.7, n);
    CHECK(a == b);  // elementwise ops are bit-identical

    scalar.recip_scale(a.data(), y.data(), 2.5, n);
    simd.recip_scale(b.data(), y.data(), 2.5, n);
    CHECK(a == b);

    std::vector<double> ya = x, yb = x;
    scalar.axpy(ya.data(), y.data(), -0.8, n);
    simd.axpy(yb.data(), y.data(), -0.8, n);
    CHECK(ya == yb);
  }
}

TEST_CASE("active backend dispatch returns a usable table") {
  const auto& k = kernels::ops();
  const std::vector<double> x = {1.0, 2.0, 3.0};
  CHECK(k.sum(x.data(), 3) == doctest::Approx(6.0));
  CHECK(kernels::backend_name(kernels::active_backend()).size() > 0);
  CHECK(kernels::backend_available(kernels::Backend::Scalar));
}
