#pragma once

#include <cstddef>

#include "prunix/tensor.hpp"

// Forward and backward primitives for the CNN layer set. All backward
// functions accumulate (+=) into caller-provided gradient buffers, which must
// be sized like the corresponding forward operand. Deterministic: loops run in
// a fixed order and reductions go through the fixed-order kernels.
namespace prunix::nn {

struct ConvDims {
  std::size_t out_h = 0, out_w = 0;
};

// Output spatial dims of a cross-correlation. Throws std::invalid_argument
// when the kernel does not fit or (in - k + 2*pad) is not divisible by stride.
ConvDims conv_output_dims(std::size_t h, std::size_t w, std::size_t k,
                          std::size_t stride, std::size_t pad);

// input [C,H,W], kernel [N,C,K,K] -> [N,Ho,Wo]; zero padding, no bias.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t pad);
void conv2d_backward(const Tensor& input, const Tensor& kernel,
                     const Tensor& dout, std::size_t stride, std::size_t pad,
                     float* dinput, float* dkernel);

// input [C], weights [N,C], bias [N] -> [N]
Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);
void linear_backward(const Tensor& input, const Tensor& weights,
                     const Tensor& dout, float* dinput, float* dweights,
                     float* dbias);

Tensor relu(const Tensor& x);
void relu_backward(const Tensor& x, const Tensor& dy, float* dx);

// Non-overlapping max pooling, stride = window; trailing rows/cols that do
// not fill a window are dropped. Ties route to the first maximal element in
// row-major window order (forward and backward agree).
Tensor maxpool2d(const Tensor& x, std::size_t window);
void maxpool2d_backward(const Tensor& x, const Tensor& dy, std::size_t window,
                        float* dx);

// -log softmax(logits)[label]; writes softmax - onehot into dlogits if given.
float softmax_cross_entropy(const Tensor& logits, std::size_t label,
                            Tensor* dlogits = nullptr);

// w -= lr * grad, then zeroes the grad buffer. No-op for tensors without one.
void sgd_step(Tensor& param, float lr);

namespace detail {
// col is [C*K*K, Ho*Wo] row-major; padding positions read as zero.
void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, float* col);
// scatter-add transpose of im2col.
void col2im_add(const float* col, std::size_t c, std::size_t h, std::size_t w,
                std::size_t k, std::size_t stride, std::size_t pad, float* img);
}  // namespace detail

}  // namespace prunix::nn
