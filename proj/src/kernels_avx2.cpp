// AVX2 kernel variants. Compiled with -mavx2; only dispatched when the CPU
// reports AVX2 support. Multiplies and adds stay separate (no FMA) so every
// lane rounds exactly like the scalar reference.

#include <immintrin.h>

#include "prunix/kernels.hpp"

namespace prunix::kern::detail {

namespace {

inline float combine_lanes(const float* s) {
  float t = s[0];
  for (int k = 1; k < 8; ++k) t += s[k];
  return t;
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    acc = _mm256_add_ps(acc, _mm256_mul_ps(vx, vy));
  }
  alignas(32) float s[8];
  _mm256_store_ps(s, acc);
  float t = combine_lanes(s);
  for (; i < n; ++i) t += x[i] * y[i];
  return t;
}

float sum_avx2(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  alignas(32) float s[8];
  _mm256_store_ps(s, acc);
  float t = combine_lanes(s);
  for (; i < n; ++i) t += x[i];
  return t;
}

void axpy_avx2(float* y, float a, const float* x, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vy = _mm256_loadu_ps(y + i);
    const __m256 vx = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(y + i, _mm256_add_ps(vy, _mm256_mul_ps(va, vx)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_const_avx2(float* y, float c, std::size_t n) {
  const __m256 vc = _mm256_set1_ps(c);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), vc));
  for (; i < n; ++i) y[i] += c;
}

void scale_avx2(float* y, float a, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), va));
  for (; i < n; ++i) y[i] *= a;
}

void relu_avx2(float* dst, const float* src, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(dst + i, _mm256_max_ps(_mm256_loadu_ps(src + i), zero));
  for (; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
}

void relu_backward_avx2(float* dx, const float* x, const float* dy,
                        std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 contrib = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), contrib));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += dy[i];
}

}  // namespace

const Impl* avx2_impl() {
  static const Impl impl{dot_avx2,      sum_avx2,   axpy_avx2, add_const_avx2,
                         scale_avx2,    relu_avx2,  relu_backward_avx2};
  return &impl;
}

}  // namespace prunix::kern::detail
