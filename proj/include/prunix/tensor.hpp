#pragma once

#include <cstddef>
#include <vector>

namespace prunix {

// Dense row-major float32 tensor with an optional gradient buffer of the
// same length. Channels-first layout for images (C,H,W).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty, or data.size() elements

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::size_t> s, float v);
  static Tensor from(std::vector<std::size_t> s, std::vector<float> values);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
  float max_abs() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace prunix
