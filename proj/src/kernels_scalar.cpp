#include "bioconic/kernels.hpp"

#include <cmath>

namespace bioconic::kernels::detail {

void mul_scalar(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void div_scalar(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / y[i];
}

void sqrt_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(x[i]);
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sumsq_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double min_ratio_scalar(const double* y, const double* x, std::size_t n) {
  double best = y[0] / x[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double r = y[i] / x[i];
    if (r < best) best = r;
  }
  return best;
}

void monod_batch_scalar(double mu, double k, const double* s, double* out,
                        std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = mu * s[i] / (k + s[i]);
}

void contois_batch_scalar(double mu, double kc, const double* s,
                          const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double den = kc * x[i] + s[i];
    out[i] = den == 0.0 ? 0.0 : mu * s[i] * x[i] / den;
  }
}

double dot_longdouble(const double* x, const double* y, std::size_t n) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<long double>(x[i]) * static_cast<long double>(y[i]);
  return static_cast<double>(acc);
}

double sumsq_longdouble(const double* x, std::size_t n) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<long double>(x[i]) * static_cast<long double>(x[i]);
  return static_cast<double>(acc);
}

} // namespace bioconic::kernels::detail
