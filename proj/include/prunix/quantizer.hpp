#pragma once

#include <cstdint>
#include <vector>

#include "prunix/model.hpp"
#include "prunix/tensor.hpp"

namespace prunix {

inline int full_scale_levels(int bits) { return (1 << bits) - 1; }

// Uniform signed level set {-a..a} * p per layer; the differential pair
// carries sign, so each polarity stores magnitudes 0..2^n-1.
struct QuantScheme {
  int bits = 4;
  int clamp_levels = 15;  // a, <= 2^bits - 1
  std::vector<float> per_layer_scale;  // p per parameter layer; empty until
                                       // calibrated
};

QuantScheme make_scheme(int bits, int clamp_levels = -1);

struct QuantizedTensor {
  std::vector<std::int32_t> levels;  // signed indices in [-(2^n-1), 2^n-1]
  float scale = 1.0f;
  std::vector<std::size_t> shape;

  Tensor dequantize() const;  // value = level * scale, exactly
};

// Nearest level with round-half-away-from-zero, clamped to +/- a.
QuantizedTensor quantize(const Tensor& w, float p, int a);
std::int32_t quantize_level(float w, float p, int a);

// p = max|w| / (2^bits - 1); 1.0 for an all-zero tensor.
float calibrate_scale(const Tensor& w, int bits);

struct DifferentialSplit {
  std::vector<std::int32_t> g_pos, g_neg;  // per-polarity magnitudes
};

// Positive levels to g_pos, negative magnitudes to g_neg; g_pos - g_neg
// reconstructs the signed index and at most one side is nonzero per cell.
DifferentialSplit split_differential(const QuantizedTensor& q);

// Calibrates any missing per-layer scales, then snaps every weight and bias
// to its level value (bias shares the layer's scheme).
void quantize_model_inplace(Model& m, QuantScheme& scheme);

// True when every weight and bias already equals its own quantized value.
bool model_is_quantized(const Model& m, const QuantScheme& scheme);

}  // namespace prunix
