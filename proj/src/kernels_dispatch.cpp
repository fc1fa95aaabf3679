#include "bioconic/kernels.hpp"

#include <cstdlib>

namespace bioconic::kernels {

namespace {

bool detect_simd() {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

bool decide_active() {
  if (!detect_simd()) return false;
  const char* force = std::getenv("BIOCONIC_FORCE_SCALAR");
  if (force && force[0] != '\0' && force[0] != '0') return false;
  return true;
}

const bool g_active = decide_active();

} // namespace

bool simd_compiled() {
#if defined(__x86_64__) || defined(_M_X64)
  return true;
#else
  return false;
#endif
}

bool simd_active() { return g_active; }

const char* backend_name() { return g_active ? "avx2" : "scalar"; }

void mul(const double* x, const double* y, double* out, std::size_t n) {
  g_active ? detail::mul_avx2(x, y, out, n) : detail::mul_scalar(x, y, out, n);
}

void div(const double* x, const double* y, double* out, std::size_t n) {
  g_active ? detail::div_avx2(x, y, out, n) : detail::div_scalar(x, y, out, n);
}

void sqrt(const double* x, double* out, std::size_t n) {
  g_active ? detail::sqrt_avx2(x, out, n) : detail::sqrt_scalar(x, out, n);
}

double dot(const double* x, const double* y, std::size_t n) {
  return g_active ? detail::dot_avx2(x, y, n) : detail::dot_scalar(x, y, n);
}

double sumsq(const double* x, std::size_t n) {
  return g_active ? detail::sumsq_avx2(x, n) : detail::sumsq_scalar(x, n);
}

double min_ratio(const double* y, const double* x, std::size_t n) {
  return g_active ? detail::min_ratio_avx2(y, x, n)
                  : detail::min_ratio_scalar(y, x, n);
}

void monod_batch(double mu, double k, const double* s, double* out,
                 std::size_t n) {
  g_active ? detail::monod_batch_avx2(mu, k, s, out, n)
           : detail::monod_batch_scalar(mu, k, s, out, n);
}

void contois_batch(double mu, double kc, const double* s, const double* x,
                   double* out, std::size_t n) {
  g_active ? detail::contois_batch_avx2(mu, kc, s, x, out, n)
           : detail::contois_batch_scalar(mu, kc, s, x, out, n);
}

} // namespace bioconic::kernels
