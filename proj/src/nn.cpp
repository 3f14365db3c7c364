#include "prunix/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "prunix/kernels.hpp"

namespace prunix::nn {

namespace detail {

void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, float* col) {
  const ConvDims d = conv_output_dims(h, w, k, stride, pad);
  const std::size_t out_cols = d.out_h * d.out_w;
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = img + ch * h * w;
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = 0; v < k; ++v, ++row) {
        float* out = col + row * out_cols;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const std::ptrdiff_t y =
              static_cast<std::ptrdiff_t>(oh * stride + u) -
              static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ow = 0; ow < d.out_w; ++ow, ++out) {
            const std::ptrdiff_t x =
                static_cast<std::ptrdiff_t>(ow * stride + v) -
                static_cast<std::ptrdiff_t>(pad);
            const bool inside = y >= 0 && y < static_cast<std::ptrdiff_t>(h) &&
                                x >= 0 && x < static_cast<std::ptrdiff_t>(w);
            *out = inside ? plane[static_cast<std::size_t>(y) * w +
                                  static_cast<std::size_t>(x)]
                          : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, std::size_t c, std::size_t h, std::size_t w,
                std::size_t k, std::size_t stride, std::size_t pad,
                float* img) {
  const ConvDims d = conv_output_dims(h, w, k, stride, pad);
  const std::size_t out_cols = d.out_h * d.out_w;
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    float* plane = img + ch * h * w;
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = 0; v < k; ++v, ++row) {
        const float* in = col + row * out_cols;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const std::ptrdiff_t y =
              static_cast<std::ptrdiff_t>(oh * stride + u) -
              static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ow = 0; ow < d.out_w; ++ow, ++in) {
            const std::ptrdiff_t x =
                static_cast<std::ptrdiff_t>(ow * stride + v) -
                static_cast<std::ptrdiff_t>(pad);
            if (y >= 0 && y < static_cast<std::ptrdiff_t>(h) && x >= 0 &&
                x < static_cast<std::ptrdiff_t>(w))
              plane[static_cast<std::size_t>(y) * w +
                    static_cast<std::size_t>(x)] += *in;
          }
        }
      }
    }
  }
}

}  // namespace detail

ConvDims conv_output_dims(std::size_t h, std::size_t w, std::size_t k,
                          std::size_t stride, std::size_t pad) {
  if (k == 0 || stride == 0)
    throw std::invalid_argument("conv2d: kernel and stride must be positive");
  if (k > h + 2 * pad || k > w + 2 * pad)
    throw std::invalid_argument("conv2d: kernel does not fit padded input");
  const std::size_t span_h = h + 2 * pad - k;
  const std::size_t span_w = w + 2 * pad - k;
  if (span_h % stride != 0 || span_w % stride != 0)
    throw std::invalid_argument(
        "conv2d: output dimension (in - k + 2*pad)/stride is not integral");
  return {span_h / stride + 1, span_w / stride + 1};
}

namespace {

void check_conv_args(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 3)
    throw std::invalid_argument("conv2d: input must be [C,H,W]");
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3))
    throw std::invalid_argument("conv2d: kernel must be [N,C,K,K]");
  if (kernel.dim(1) != input.dim(0))
    throw std::invalid_argument(
        "conv2d: kernel channels do not match input channels");
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t pad) {
  check_conv_args(input, kernel);
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = kernel.dim(0), k = kernel.dim(2);
  const ConvDims d = conv_output_dims(h, w, k, stride, pad);
  const std::size_t out_cols = d.out_h * d.out_w;
  const std::size_t taps = c * k * k;

  std::vector<float> col(taps * out_cols);
  detail::im2col(input.data.data(), c, h, w, k, stride, pad, col.data());

  Tensor out({n, d.out_h, d.out_w});
  for (std::size_t f = 0; f < n; ++f) {
    float* dst = out.data.data() + f * out_cols;
    const float* krow = kernel.data.data() + f * taps;
    for (std::size_t t = 0; t < taps; ++t)
      kern::axpy(dst, krow[t], col.data() + t * out_cols, out_cols);
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel,
                     const Tensor& dout, std::size_t stride, std::size_t pad,
                     float* dinput, float* dkernel) {
  check_conv_args(input, kernel);
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = kernel.dim(0), k = kernel.dim(2);
  const ConvDims d = conv_output_dims(h, w, k, stride, pad);
  const std::size_t out_cols = d.out_h * d.out_w;
  const std::size_t taps = c * k * k;
  if (dout.numel() != n * out_cols)
    throw std::invalid_argument("conv2d_backward: dout shape mismatch");

  std::vector<float> col(taps * out_cols);
  detail::im2col(input.data.data(), c, h, w, k, stride, pad, col.data());

  if (dkernel != nullptr) {
    for (std::size_t f = 0; f < n; ++f) {
      const float* drow = dout.data.data() + f * out_cols;
      float* grow = dkernel + f * taps;
      for (std::size_t t = 0; t < taps; ++t)
        grow[t] += kern::dot(drow, col.data() + t * out_cols, out_cols);
    }
  }

  if (dinput != nullptr) {
    std::vector<float> dcol(taps * out_cols, 0.0f);
    for (std::size_t f = 0; f < n; ++f) {
      const float* drow = dout.data.data() + f * out_cols;
      const float* krow = kernel.data.data() + f * taps;
      for (std::size_t t = 0; t < taps; ++t)
        kern::axpy(dcol.data() + t * out_cols, krow[t], drow, out_cols);
    }
    detail::col2im_add(dcol.data(), c, h, w, k, stride, pad, dinput);
  }
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2)
    throw std::invalid_argument("linear: weights must be [N,C]");
  const std::size_t n = weights.dim(0), c = weights.dim(1);
  if (input.numel() != c)
    throw std::invalid_argument("linear: input length does not match weights");
  if (bias.numel() != n)
    throw std::invalid_argument("linear: bias length does not match weights");
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i)
    out.data[i] = kern::dot(weights.data.data() + i * c, input.data.data(), c) +
                  bias.data[i];
  return out;
}

void linear_backward(const Tensor& input, const Tensor& weights,
                     const Tensor& dout, float* dinput, float* dweights,
                     float* dbias) {
  const std::size_t n = weights.dim(0), c = weights.dim(1);
  if (dout.numel() != n)
    throw std::invalid_argument("linear_backward: dout shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const float g = dout.data[i];
    if (dweights != nullptr)
      kern::axpy(dweights + i * c, g, input.data.data(), c);
    if (dinput != nullptr)
      kern::axpy(dinput, g, weights.data.data() + i * c, c);
    if (dbias != nullptr) dbias[i] += g;
  }
}

Tensor relu(const Tensor& x) {
  Tensor out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  kern::relu(out.data.data(), x.data.data(), x.numel());
  return out;
}

void relu_backward(const Tensor& x, const Tensor& dy, float* dx) {
  if (dy.numel() != x.numel())
    throw std::invalid_argument("relu_backward: shape mismatch");
  kern::relu_backward(dx, x.data.data(), dy.data.data(), x.numel());
}

Tensor maxpool2d(const Tensor& x, std::size_t window) {
  if (x.rank() != 3) throw std::invalid_argument("maxpool2d: input must be [C,H,W]");
  if (window == 0) throw std::invalid_argument("maxpool2d: window must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  if (oh == 0 || ow == 0)
    throw std::invalid_argument("maxpool2d: window larger than input");
  Tensor out({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = x.data.data() + ch * h * w;
    float* dst = out.data.data() + ch * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        float best = plane[(i * window) * w + j * window];
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v) {
            const float val = plane[(i * window + u) * w + (j * window + v)];
            if (val > best) best = val;
          }
        dst[i * ow + j] = best;
      }
    }
  }
  return out;
}

void maxpool2d_backward(const Tensor& x, const Tensor& dy, std::size_t window,
                        float* dx) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  if (dy.numel() != c * oh * ow)
    throw std::invalid_argument("maxpool2d_backward: dy shape mismatch");
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = x.data.data() + ch * h * w;
    const float* dplane = dy.data.data() + ch * oh * ow;
    float* gplane = dx + ch * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        // first maximal element in row-major window order
        std::size_t besty = i * window, bestx = j * window;
        float best = plane[besty * w + bestx];
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v) {
            const std::size_t yy = i * window + u, xx = j * window + v;
            if (plane[yy * w + xx] > best) {
              best = plane[yy * w + xx];
              besty = yy;
              bestx = xx;
            }
          }
        gplane[besty * w + bestx] += dplane[i * ow + j];
      }
    }
  }
}

float softmax_cross_entropy(const Tensor& logits, std::size_t label,
                            Tensor* dlogits) {
  const std::size_t n = logits.numel();
  if (label >= n)
    throw std::invalid_argument("softmax_cross_entropy: label out of range");
  float m = logits.data[0];
  for (std::size_t i = 1; i < n; ++i)
    if (logits.data[i] > m) m = logits.data[i];
  float denom = 0.0f;
  for (std::size_t i = 0; i < n; ++i)
    denom += std::exp(logits.data[i] - m);
  const float loss = std::log(denom) - (logits.data[label] - m);
  if (dlogits != nullptr) {
    dlogits->shape = logits.shape;
    dlogits->data.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      dlogits->data[i] = std::exp(logits.data[i] - m) / denom;
    dlogits->data[label] -= 1.0f;
  }
  return loss;
}

void sgd_step(Tensor& param, float lr) {
  if (!(lr > 0.0f))
    throw std::invalid_argument("sgd_step: learning rate must be positive");
  if (!param.has_grad()) return;
  kern::axpy(param.data.data(), -lr, param.grad.data(), param.numel());
  param.zero_grad();
}

}  // namespace prunix::nn
