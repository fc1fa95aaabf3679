#pragma once

#include <cstddef>

namespace bioconic::kernels {

// Elementwise kernels and reductions backing the interior-point solver's cone
// operations and batch kinetics evaluation. Every kernel has a scalar
// reference implementation; AVX2 variants are selected at runtime when the
// CPU supports them. Set BIOCONIC_FORCE_SCALAR=1 to pin the scalar path.

bool simd_compiled();
bool simd_active();
const char* backend_name();

void mul(const double* x, const double* y, double* out, std::size_t n);
void div(const double* x, const double* y, double* out, std::size_t n);
void sqrt(const double* x, double* out, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sumsq(const double* x, std::size_t n);

// min over i of y[i]/x[i]; n must be >= 1
double min_ratio(const double* y, const double* x, std::size_t n);

// out[i] = mu * s[i] / (k + s[i])
void monod_batch(double mu, double k, const double* s, double* out,
                 std::size_t n);

// out[i] = mu * s[i] * x[i] / (kc * x[i] + s[i]); 0 where the denominator is 0
void contois_batch(double mu, double kc, const double* s, const double* x,
                   double* out, std::size_t n);

namespace detail {

void mul_scalar(const double* x, const double* y, double* out, std::size_t n);
void div_scalar(const double* x, const double* y, double* out, std::size_t n);
void sqrt_scalar(const double* x, double* out, std::size_t n);
double dot_scalar(const double* x, const double* y, std::size_t n);
double sumsq_scalar(const double* x, std::size_t n);
double min_ratio_scalar(const double* y, const double* x, std::size_t n);
void monod_batch_scalar(double mu, double k, const double* s, double* out,
                        std::size_t n);
void contois_batch_scalar(double mu, double kc, const double* s,
                          const double* x, double* out, std::size_t n);

// Long-double accumulation, used by tests as the reduction reference.
double dot_longdouble(const double* x, const double* y, std::size_t n);
double sumsq_longdouble(const double* x, std::size_t n);

void mul_avx2(const double* x, const double* y, double* out, std::size_t n);
void div_avx2(const double* x, const double* y, double* out, std::size_t n);
void sqrt_avx2(const double* x, double* out, std::size_t n);
double dot_avx2(const double* x, const double* y, std::size_t n);
double sumsq_avx2(const double* x, std::size_t n);
double min_ratio_avx2(const double* y, const double* x, std::size_t n);
void monod_batch_avx2(double mu, double k, const double* s, double* out,
                      std::size_t n);
void contois_batch_avx2(double mu, double kc, const double* s, const double* x,
                        double* out, std::size_t n);

} // namespace detail

} // namespace bioconic::kernels
