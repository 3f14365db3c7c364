// NEON kernel variants for AArch64. Two 4-lane accumulators reproduce the
// 8-lane partial-sum layout of the scalar reference; vmul/vadd are kept
// separate (no fused vmla) so lanes round exactly like scalar mul+add.

#include <arm_neon.h>

#include "prunix/kernels.hpp"

namespace prunix::kern::detail {

namespace {

inline float combine_lanes(const float* s) {
  float t = s[0];
  for (int k = 1; k < 8; ++k) t += s[k];
  return t;
}

float dot_neon(const float* x, const float* y, std::size_t n) {
  float32x4_t lo = vdupq_n_f32(0.0f);
  float32x4_t hi = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = vaddq_f32(lo, vmulq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
    hi = vaddq_f32(hi, vmulq_f32(vld1q_f32(x + i + 4), vld1q_f32(y + i + 4)));
  }
  float s[8];
  vst1q_f32(s, lo);
  vst1q_f32(s + 4, hi);
  float t = combine_lanes(s);
  for (; i < n; ++i) t += x[i] * y[i];
  return t;
}

float sum_neon(const float* x, std::size_t n) {
  float32x4_t lo = vdupq_n_f32(0.0f);
  float32x4_t hi = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = vaddq_f32(lo, vld1q_f32(x + i));
    hi = vaddq_f32(hi, vld1q_f32(x + i + 4));
  }
  float s[8];
  vst1q_f32(s, lo);
  vst1q_f32(s + 4, hi);
  float t = combine_lanes(s);
  for (; i < n; ++i) t += x[i];
  return t;
}

void axpy_neon(float* y, float a, const float* x, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vy = vld1q_f32(y + i);
    vst1q_f32(y + i, vaddq_f32(vy, vmulq_f32(va, vld1q_f32(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_const_neon(float* y, float c, std::size_t n) {
  const float32x4_t vc = vdupq_n_f32(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vc));
  for (; i < n; ++i) y[i] += c;
}

void scale_neon(float* y, float a, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vmulq_f32(vld1q_f32(y + i), va));
  for (; i < n; ++i) y[i] *= a;
}

void relu_neon(float* dst, const float* src, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(dst + i, vmaxq_f32(vld1q_f32(src + i), zero));
  for (; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
}

void relu_backward_neon(float* dx, const float* x, const float* dy,
                        std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t mask = vcgtq_f32(vld1q_f32(x + i), zero);
    const float32x4_t contrib = vreinterpretq_f32_u32(
        vandq_u32(mask, vreinterpretq_u32_f32(vld1q_f32(dy + i))));
    vst1q_f32(dx + i, vaddq_f32(vld1q_f32(dx + i), contrib));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += dy[i];
}

}  // namespace

const Impl* neon_impl() {
  static const Impl impl{dot_neon,   sum_neon,  axpy_neon, add_const_neon,
                         scale_neon, relu_neon, relu_backward_neon};
  return &impl;
}

}  // namespace prunix::kern::detail
