#include "prunix/quantizer.hpp"

#include <cmath>
#include <stdexcept>

namespace prunix {

QuantScheme make_scheme(int bits, int clamp_levels) {
  if (bits < 2 || bits > 8)
    throw std::invalid_argument("quantizer: bits must be in [2,8]");
  QuantScheme s;
  s.bits = bits;
  s.clamp_levels = clamp_levels < 0 ? full_scale_levels(bits) : clamp_levels;
  if (s.clamp_levels < 1 || s.clamp_levels > full_scale_levels(bits))
    throw std::invalid_argument("quantizer: clamp outside [1, 2^n-1]");
  return s;
}

Tensor QuantizedTensor::dequantize() const {
  Tensor t;
  t.shape = shape;
  t.data.resize(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i)
    t.data[i] = static_cast<float>(levels[i]) * scale;
  return t;
}

std::int32_t quantize_level(float w, float p, int a) {
  if (!(p > 0.0f))
    throw std::invalid_argument("quantize: period must be positive");
  // round half away from zero on the magnitude
  std::int32_t lv = static_cast<std::int32_t>(std::lround(std::fabs(w) / p));
  if (lv > a) lv = a;
  return w < 0.0f ? -lv : lv;
}

QuantizedTensor quantize(const Tensor& w, float p, int a) {
  QuantizedTensor q;
  q.scale = p;
  q.shape = w.shape;
  q.levels.resize(w.numel());
  for (std::size_t i = 0; i < w.numel(); ++i)
    q.levels[i] = quantize_level(w.data[i], p, a);
  return q;
}

float calibrate_scale(const Tensor& w, int bits) {
  if (w.numel() == 0)
    throw std::invalid_argument("calibrate_scale: empty tensor");
  const float m = w.max_abs();
  if (m == 0.0f) return 1.0f;
  return m / static_cast<float>(full_scale_levels(bits));
}

DifferentialSplit split_differential(const QuantizedTensor& q) {
  DifferentialSplit s;
  s.g_pos.resize(q.levels.size(), 0);
  s.g_neg.resize(q.levels.size(), 0);
  for (std::size_t i = 0; i < q.levels.size(); ++i) {
    const std::int32_t lv = q.levels[i];
    if (lv >= 0)
      s.g_pos[i] = lv;
    else
      s.g_neg[i] = -lv;
  }
  return s;
}

void quantize_model_inplace(Model& m, QuantScheme& scheme) {
  const std::size_t np = m.param_layer_count();
  if (scheme.per_layer_scale.size() < np) {
    scheme.per_layer_scale.resize(np, 0.0f);
  }
  for (std::size_t pi = 0; pi < np; ++pi) {
    Layer& l = m.param_layer(pi);
    if (scheme.per_layer_scale[pi] <= 0.0f)
      scheme.per_layer_scale[pi] = calibrate_scale(l.weight, scheme.bits);
    const float p = scheme.per_layer_scale[pi];
    for (float& w : l.weight.data)
      w = static_cast<float>(quantize_level(w, p, scheme.clamp_levels)) * p;
    for (float& b : l.bias.data)
      b = static_cast<float>(quantize_level(b, p, scheme.clamp_levels)) * p;
  }
}

bool model_is_quantized(const Model& m, const QuantScheme& scheme) {
  const std::size_t np = m.param_layer_count();
  if (scheme.per_layer_scale.size() < np) return false;
  for (std::size_t pi = 0; pi < np; ++pi) {
    const Layer& l = m.param_layer(pi);
    const float p = scheme.per_layer_scale[pi];
    if (!(p > 0.0f)) return false;
    for (const float w : l.weight.data)
      if (w != static_cast<float>(quantize_level(w, p, scheme.clamp_levels)) * p)
        return false;
    for (const float b : l.bias.data)
      if (b != static_cast<float>(quantize_level(b, p, scheme.clamp_levels)) * p)
        return false;
  }
  return true;
}

}  // namespace prunix
