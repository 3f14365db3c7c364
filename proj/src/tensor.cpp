#include "prunix/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace prunix {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(shape_numel(shape), 0.0f);
}

Tensor Tensor::full(std::vector<std::size_t> s, float v) {
  Tensor t(std::move(s));
  for (float& x : t.data) x = v;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> s, std::vector<float> values) {
  if (shape_numel(s) != values.size())
    throw std::invalid_argument("tensor data length does not match shape");
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(values);
  return t;
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(data.size(), 0.0f);
}

bool Tensor::all_finite() const {
  for (const float x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

float Tensor::max_abs() const {
  float m = 0.0f;
  for (const float x : data) {
    const float a = std::fabs(x);
    if (a > m) m = a;
  }
  return m;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace prunix
