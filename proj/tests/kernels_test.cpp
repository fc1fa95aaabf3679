#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "bioconic/kernels.hpp"

using namespace bioconic::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo,
                               double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Sizes straddling the vector width and its remainders.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 63, 64,
                              65, 1000, 1337};

} // namespace

TEST_CASE("elementwise kernels match the scalar reference bitwise") {
  if (!simd_active()) return;
  std::mt19937_64 rng(7);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng, 1e-8, 1e8);
    auto y = random_vec(n, rng, 1e-8, 1e8);
    std::vector<double> a(n), b(n);

    detail::mul_scalar(x.data(), y.data(), a.data(), n);
    detail::mul_avx2(x.data(), y.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == b[i]);

    detail::div_scalar(x.data(), y.data(), a.data(), n);
    detail::div_avx2(x.data(), y.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == b[i]);

    detail::sqrt_scalar(x.data(), a.data(), n);
    detail::sqrt_avx2(x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == b[i]);

    detail::monod_batch_scalar(2.5, 13.7, x.data(), a.data(), n);
    detail::monod_batch_avx2(2.5, 13.7, x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == b[i]);

    detail::contois_batch_scalar(1.8, 0.4, x.data(), y.data(), a.data(), n);
    detail::contois_batch_avx2(1.8, 0.4, x.data(), y.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("contois batch handles a zero denominator") {
  std::vector<double> s{0.0, 1.0, 0.0, 3.0, 0.0};
  std::vector<double> x{0.0, 2.0, 0.0, 0.5, 0.0};
  std::vector<double> out(5, -1.0);
  contois_batch(1.5, 0.7, s.data(), x.data(), out.data(), 5);
  CHECK(out[0] == 0.0);
  CHECK(out[2] == 0.0);
  CHECK(out[4] == 0.0);
  CHECK(out[1] == doctest::Approx(1.5 * 1.0 * 2.0 / (0.7 * 2.0 + 1.0)));
  if (simd_active()) {
    std::vector<double> out2(5, -1.0);
    detail::contois_batch_avx2(1.5, 0.7, s.data(), x.data(), out2.data(), 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(out[i] == out2[i]);
  }
}

TEST_CASE("reductions agree with long-double accumulation") {
  std::mt19937_64 rng(11);
  for (std::size_t n : kSizes) {
    if (n == 0) continue;
    auto x = random_vec(n, rng, -1e4, 1e4);
    auto y = random_vec(n, rng, -1e4, 1e4);

    const double dref = detail::dot_longdouble(x.data(), y.data(), n);
    const double sref = detail::sumsq_longdouble(x.data(), n);
    const double dscale = std::max(1.0, std::abs(dref));

    CHECK(std::abs(detail::dot_scalar(x.data(), y.data(), n) - dref) <=
          1e-12 * dscale);
    CHECK(std::abs(detail::sumsq_scalar(x.data(), n) - sref) <=
          1e-12 * std::max(1.0, sref));
    if (simd_active()) {
      CHECK(std::abs(detail::dot_avx2(x.data(), y.data(), n) - dref) <=
            1e-12 * dscale);
      CHECK(std::abs(detail::sumsq_avx2(x.data(), n) - sref) <=
            1e-12 * std::max(1.0, sref));
    }
  }
}

TEST_CASE("min_ratio picks the exact minimum quotient") {
  std::mt19937_64 rng(13);
  for (std::size_t n : kSizes) {
    if (n == 0) continue;
    auto x = random_vec(n, rng, 0.1, 10.0);
    auto y = random_vec(n, rng, -5.0, 5.0);
    double ref = y[0] / x[0];
    for (std::size_t i = 1; i < n; ++i) ref = std::min(ref, y[i] / x[i]);
    CHECK(min_ratio(y.data(), x.data(), n) == ref);
    CHECK(detail::min_ratio_scalar(y.data(), x.data(), n) == ref);
    if (simd_active())
      CHECK(detail::min_ratio_avx2(y.data(), x.data(), n) == ref);
  }
}

TEST_CASE("dispatch reports a coherent backend") {
  CHECK((simd_active() ? simd_compiled() : true));
  const std::string name = backend_name();
  CHECK((name == "avx2" || name == "scalar"));
  CHECK((simd_active() ? name == "avx2" : name == "scalar"));
}
