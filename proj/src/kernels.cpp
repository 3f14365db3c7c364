#include "prunix/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace prunix::kern {

namespace detail {

namespace {

// Reduction-order contract shared by every backend: blocks of eight strided
// partial sums, lanes combined left to right, then the sequential tail.
inline float combine_lanes(const float* s) {
  float t = s[0];
  for (int k = 1; k < 8; ++k) t += s[k];
  return t;
}

float dot_scalar(const float* x, const float* y, std::size_t n) {
  float s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) s[k] += x[i + k] * y[i + k];
  float t = combine_lanes(s);
  for (; i < n; ++i) t += x[i] * y[i];
  return t;
}

float sum_scalar(const float* x, std::size_t n) {
  float s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) s[k] += x[i + k];
  float t = combine_lanes(s);
  for (; i < n; ++i) t += x[i];
  return t;
}

void axpy_scalar(float* y, float a, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_const_scalar(float* y, float c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c;
}

void scale_scalar(float* y, float a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void relu_scalar(float* dst, const float* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
}

void relu_backward_scalar(float* dx, const float* x, const float* dy,
                          std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += dy[i];
}

}  // namespace

const Impl& scalar_impl() {
  static const Impl impl{dot_scalar,   sum_scalar,  axpy_scalar,
                         add_const_scalar, scale_scalar, relu_scalar,
                         relu_backward_scalar};
  return impl;
}

#if !(defined(__x86_64__) || defined(_M_X64))
const Impl* avx2_impl() { return nullptr; }
#endif
#if !(defined(__aarch64__) || defined(_M_ARM64))
const Impl* neon_impl() { return nullptr; }
#endif

}  // namespace detail

namespace {

struct Dispatch {
  const detail::Impl* impl;
  Backend backend;
};

bool runtime_supported(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return detail::avx2_impl() != nullptr &&
             __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::neon:
      return detail::neon_impl() != nullptr;
  }
  return false;
}

const detail::Impl* impl_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &detail::scalar_impl();
    case Backend::avx2:
      return detail::avx2_impl();
    case Backend::neon:
      return detail::neon_impl();
  }
  return nullptr;
}

Backend parse_backend(const std::string& name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  if (name == "neon") return Backend::neon;
  throw std::invalid_argument("unknown kernel backend: " + name);
}

Dispatch make_default() {
  if (const char* env = std::getenv("PRUNIX_BACKEND")) {
    const Backend b = parse_backend(env);
    if (!runtime_supported(b))
      throw std::invalid_argument(std::string("PRUNIX_BACKEND=") + env +
                                  " is not supported on this machine");
    return {impl_for(b), b};
  }
  for (const Backend b : {Backend::avx2, Backend::neon}) {
    if (runtime_supported(b)) return {impl_for(b), b};
  }
  return {&detail::scalar_impl(), Backend::scalar};
}

Dispatch& dispatch() {
  static Dispatch d = make_default();
  return d;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "?";
}

bool backend_supported(Backend b) { return runtime_supported(b); }

Backend active_backend() { return dispatch().backend; }

void force_backend(Backend b) {
  if (!runtime_supported(b))
    throw std::invalid_argument(std::string("kernel backend ") +
                                backend_name(b) +
                                " is not supported on this machine");
  dispatch() = {impl_for(b), b};
}

float dot(const float* x, const float* y, std::size_t n) {
  return dispatch().impl->dot(x, y, n);
}

float sum(const float* x, std::size_t n) { return dispatch().impl->sum(x, n); }

void axpy(float* y, float a, const float* x, std::size_t n) {
  dispatch().impl->axpy(y, a, x, n);
}

void add_const(float* y, float c, std::size_t n) {
  dispatch().impl->add_const(y, c, n);
}

void scale(float* y, float a, std::size_t n) {
  dispatch().impl->scale(y, a, n);
}

void relu(float* dst, const float* src, std::size_t n) {
  dispatch().impl->relu(dst, src, n);
}

void relu_backward(float* dx, const float* x, const float* dy, std::size_t n) {
  dispatch().impl->relu_backward(dx, x, dy, n);
}

}  // namespace prunix::kern
