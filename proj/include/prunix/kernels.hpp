#pragma once

#include <cstddef>

// Data-parallel inner-loop kernels. Every operation has a scalar reference
// implementation and, where the target supports it, a SIMD variant (AVX2 on
// x86-64, NEON on AArch64) selected at runtime. All variants are bit-identical
// to the scalar reference: elementwise ops round identically per element, and
// reductions commit to a fixed 8-accumulator order that the vector lanes
// reproduce exactly. Requires -ffp-contract=off so the compiler cannot fuse
// the scalar mul/add pairs.
namespace prunix::kern {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool backend_supported(Backend b);
Backend active_backend();
// Select a backend explicitly (tests, PRUNIX_BACKEND env var). Throws
// std::invalid_argument if the backend is not supported on this machine.
void force_backend(Backend b);

// sum_i x[i]*y[i], fixed reduction order.
float dot(const float* x, const float* y, std::size_t n);
// sum_i x[i], fixed reduction order.
float sum(const float* x, std::size_t n);
// y[i] += a * x[i]
void axpy(float* y, float a, const float* x, std::size_t n);
// y[i] += c
void add_const(float* y, float c, std::size_t n);
// y[i] *= a
void scale(float* y, float a, std::size_t n);
// dst[i] = max(src[i], 0)
void relu(float* dst, const float* src, std::size_t n);
// dx[i] += dy[i] wherever x[i] > 0
void relu_backward(float* dx, const float* x, const float* dy, std::size_t n);

namespace detail {

struct Impl {
  float (*dot)(const float*, const float*, std::size_t);
  float (*sum)(const float*, std::size_t);
  void (*axpy)(float*, float, const float*, std::size_t);
  void (*add_const)(float*, float, std::size_t);
  void (*scale)(float*, float, std::size_t);
  void (*relu)(float*, const float*, std::size_t);
  void (*relu_backward)(float*, const float*, const float*, std::size_t);
};

const Impl& scalar_impl();
const Impl* avx2_impl();  // nullptr when not compiled for this target
const Impl* neon_impl();

}  // namespace detail

}  // namespace prunix::kern
