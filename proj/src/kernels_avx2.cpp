#include "bioconic/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define BIOCONIC_HAVE_AVX2_TARGET 1
#include <immintrin.h>
#endif

namespace bioconic::kernels::detail {

#ifdef BIOCONIC_HAVE_AVX2_TARGET

__attribute__((target("avx2"))) void mul_avx2(const double* x, const double* y,
                                              double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

__attribute__((target("avx2"))) void div_avx2(const double* x, const double* y,
                                              double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] / y[i];
}

__attribute__((target("avx2"))) void sqrt_avx2(const double* x, double* out,
                                               std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = __builtin_sqrt(x[i]);
}

__attribute__((target("avx2"))) double dot_avx2(const double* x,
                                                const double* y,
                                                std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                             _mm256_loadu_pd(y + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(x + i + 4),
                                             _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                             _mm256_loadu_pd(y + i)));
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

__attribute__((target("avx2"))) double sumsq_avx2(const double* x,
                                                  std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(v, v));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

__attribute__((target("avx2"))) double min_ratio_avx2(const double* y,
                                                      const double* x,
                                                      std::size_t n) {
  std::size_t i = 0;
  double best = y[0] / x[0];
  if (n >= 4) {
    __m256d vbest = _mm256_div_pd(_mm256_loadu_pd(y), _mm256_loadu_pd(x));
    for (i = 4; i + 4 <= n; i += 4) {
      vbest = _mm256_min_pd(vbest, _mm256_div_pd(_mm256_loadu_pd(y + i),
                                                 _mm256_loadu_pd(x + i)));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, vbest);
    best = lanes[0];
    for (int k = 1; k < 4; ++k)
      if (lanes[k] < best) best = lanes[k];
  }
  for (; i < n; ++i) {
    const double r = y[i] / x[i];
    if (r < best) best = r;
  }
  return best;
}

__attribute__((target("avx2"))) void monod_batch_avx2(double mu, double k,
                                                      const double* s,
                                                      double* out,
                                                      std::size_t n) {
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vk = _mm256_set1_pd(k);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vs = _mm256_loadu_pd(s + i);
    _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_mul_pd(vmu, vs),
                                            _mm256_add_pd(vk, vs)));
  }
  for (; i < n; ++i) out[i] = mu * s[i] / (k + s[i]);
}

__attribute__((target("avx2"))) void contois_batch_avx2(double mu, double kc,
                                                        const double* s,
                                                        const double* x,
                                                        double* out,
                                                        std::size_t n) {
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vkc = _mm256_set1_pd(kc);
  const __m256d vzero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vs = _mm256_loadu_pd(s + i);
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d den = _mm256_add_pd(_mm256_mul_pd(vkc, vx), vs);
    const __m256d num = _mm256_mul_pd(_mm256_mul_pd(vmu, vs), vx);
    const __m256d q = _mm256_div_pd(num, den);
    const __m256d mask = _mm256_cmp_pd(den, vzero, _CMP_EQ_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(q, vzero, mask));
  }
  for (; i < n; ++i) {
    const double den = kc * x[i] + s[i];
    out[i] = den == 0.0 ? 0.0 : mu * s[i] * x[i] / den;
  }
}

#else // !BIOCONIC_HAVE_AVX2_TARGET

void mul_avx2(const double* x, const double* y, double* out, std::size_t n) {
  mul_scalar(x, y, out, n);
}
void div_avx2(const double* x, const double* y, double* out, std::size_t n) {
  div_scalar(x, y, out, n);
}
void sqrt_avx2(const double* x, double* out, std::size_t n) {
  sqrt_scalar(x, out, n);
}
double dot_avx2(const double* x, const double* y, std::size_t n) {
  return dot_scalar(x, y, n);
}
double sumsq_avx2(const double* x, std::size_t n) { return sumsq_scalar(x, n); }
double min_ratio_avx2(const double* y, const double* x, std::size_t n) {
  return min_ratio_scalar(y, x, n);
}
void monod_batch_avx2(double mu, double k, const double* s, double* out,
                      std::size_t n) {
  monod_batch_scalar(mu, k, s, out, n);
}
void contois_batch_avx2(double mu, double kc, const double* s, const double* x,
                        double* out, std::size_t n) {
  contois_batch_scalar(mu, kc, s, x, out, n);
}

#endif

} // namespace bioconic::kernels::detail
