#include "prunix/regularizer.hpp"

#include <cmath>
#include <stdexcept>

#include "prunix/errors.hpp"

namespace prunix {

RegKind parse_reg_kind(const std::string& name) {
  if (name == "group_sawtooth") return RegKind::GroupSawtooth;
  if (name == "sawtooth") return RegKind::Sawtooth;
  if (name == "group_lasso") return RegKind::GroupLasso;
  if (name == "l1") return RegKind::L1;
  if (name == "none") return RegKind::None;
  throw ConfigError("unknown regularizer kind: " + name);
}

GroupGamma parse_group_gamma(const std::string& name) {
  if (name == "group_norm") return GroupGamma::GroupNorm;
  if (name == "residual_norm") return GroupGamma::ResidualNorm;
  if (name == "elementwise") return GroupGamma::Elementwise;
  throw ConfigError("unknown group sawtooth mode: " + name);
}

const char* reg_kind_name(RegKind k) {
  switch (k) {
    case RegKind::GroupSawtooth:
      return "group_sawtooth";
    case RegKind::Sawtooth:
      return "sawtooth";
    case RegKind::GroupLasso:
      return "group_lasso";
    case RegKind::L1:
      return "l1";
    case RegKind::None:
      return "none";
  }
  return "?";
}

float sawtooth(float w, float p, int a) {
  if (!(p > 0.0f))
    throw std::invalid_argument("sawtooth: period must be positive");
  const float x = w / p;
  const float af = static_cast<float>(a);
  const float clamped = std::fmin(std::fmax(x, -af), af);
  return std::fabs(clamped - std::floor(x + 0.5f));
}

float sawtooth_subgradient(float w, float p, int a) {
  if (!(p > 0.0f))
    throw std::invalid_argument("sawtooth: period must be positive");
  const float x = w / p;
  const float af = static_cast<float>(a);
  if (std::fabs(x) >= af) return 0.0f;  // plateau and clamp boundary
  const float frac = x - std::floor(x);
  if (frac == 0.0f || frac == 0.5f) return 0.0f;  // level or kink
  const float diff = x - std::floor(x + 0.5f);
  return (diff > 0.0f ? 1.0f : -1.0f) / p;
}

float relax_lambda(float lambda_s, float decay, int epoch) {
  if (!(decay > 0.0f) || decay > 1.0f)
    throw std::invalid_argument("relax_lambda: decay must be in (0,1]");
  if (epoch < 0) throw std::invalid_argument("relax_lambda: negative epoch");
  float l = lambda_s;
  for (int e = 0; e < epoch; ++e) l *= decay;
  return l;
}

namespace {

float scale_for(const RegularizerConfig& cfg, const std::vector<float>& scales,
                std::size_t pi) {
  if (pi < scales.size() && scales[pi] > 0.0f) return scales[pi];
  if (cfg.saw.period > 0.0f) return cfg.saw.period;
  throw std::invalid_argument("sawtooth: no level period for layer " +
                              std::to_string(pi));
}

double group_l2_norm(const float* w, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += static_cast<double>(w[i]) * static_cast<double>(w[i]);
  return std::sqrt(s);
}

bool group_included(const Model& m, const RegularizerConfig& cfg,
                    std::size_t pi) {
  if (pi >= m.regularized_param_layers) return false;
  if (!cfg.group_fc && m.param_layer(pi).spec.kind == LayerKind::FC)
    return false;
  return true;
}

// Unscaled group sawtooth sum per the configured group reduction.
double group_sawtooth_sum(const Model& m, const RegularizerConfig& cfg,
                          const std::vector<float>& scales) {
  double total = 0.0;
  for (const GroupView& g : parameter_groups(m)) {
    if (!group_included(m, cfg, g.param_layer)) continue;
    const float p = scale_for(cfg, scales, g.param_layer);
    const int a = cfg.saw.clamp_levels;
    const float* w = m.param_layer(g.param_layer).weight.data.data() + g.offset;
    switch (cfg.group_gamma) {
      case GroupGamma::GroupNorm:
        total += sawtooth(static_cast<float>(group_l2_norm(w, g.size)), p, a);
        break;
      case GroupGamma::ResidualNorm: {
        double s = 0.0;
        for (std::size_t i = 0; i < g.size; ++i) {
          const double r = sawtooth(w[i], p, a);
          s += r * r;
        }
        total += std::sqrt(s);
        break;
      }
      case GroupGamma::Elementwise:
        for (std::size_t i = 0; i < g.size; ++i) total += sawtooth(w[i], p, a);
        break;
    }
  }
  return total;
}

double elementwise_sawtooth_sum(const Model& m, const RegularizerConfig& cfg,
                                const std::vector<float>& scales) {
  double total = 0.0;
  const std::size_t np = m.param_layer_count();
  for (std::size_t pi = 0; pi < np && pi < m.regularized_param_layers; ++pi) {
    const float p = scale_for(cfg, scales, pi);
    for (const float w : m.param_layer(pi).weight.data)
      total += sawtooth(w, p, cfg.saw.clamp_levels);
  }
  return total;
}

}  // namespace

double group_sawtooth_loss(const Model& m, const RegularizerConfig& cfg,
                           const std::vector<float>& scales,
                           double lambda_override) {
  const double lambda =
      lambda_override >= 0.0 ? lambda_override : cfg.saw.lambda_s;
  return lambda * group_sawtooth_sum(m, cfg, scales);
}

double group_lasso_penalty(const Model& m, float lambda_reg, bool group_fc) {
  double total = 0.0;
  for (const GroupView& g : parameter_groups(m)) {
    if (g.param_layer >= m.regularized_param_layers) continue;
    const Layer& l = m.param_layer(g.param_layer);
    if (!group_fc && l.spec.kind == LayerKind::FC) continue;
    total += group_l2_norm(l.weight.data.data() + g.offset, g.size);
  }
  return lambda_reg * total;
}

double l1_penalty(const Model& m, float lambda_reg) {
  double total = 0.0;
  const std::size_t np = m.param_layer_count();
  for (std::size_t pi = 0; pi < np && pi < m.regularized_param_layers; ++pi)
    for (const float w : m.param_layer(pi).weight.data)
      total += std::fabs(w);
  return lambda_reg * total;
}

double regularizer_penalty(const Model& m, const RegularizerConfig& cfg,
                           const std::vector<float>& scales,
                           double lambda_now) {
  switch (cfg.kind) {
    case RegKind::GroupSawtooth:
      return group_sawtooth_loss(m, cfg, scales, lambda_now);
    case RegKind::Sawtooth:
      return lambda_now * elementwise_sawtooth_sum(m, cfg, scales);
    case RegKind::GroupLasso:
      return group_lasso_penalty(m, cfg.lambda_reg, cfg.group_fc);
    case RegKind::L1:
      return l1_penalty(m, cfg.lambda_reg);
    case RegKind::None:
      return 0.0;
  }
  return 0.0;
}

void add_regularizer_gradient(Model& m, const RegularizerConfig& cfg,
                              const std::vector<float>& scales,
                              double lambda_now) {
  if (cfg.kind == RegKind::None) return;
  const std::size_t np = m.param_layer_count();

  if (cfg.kind == RegKind::L1) {
    for (std::size_t pi = 0; pi < np && pi < m.regularized_param_layers;
         ++pi) {
      Layer& l = m.param_layer(pi);
      l.weight.ensure_grad();
      for (std::size_t i = 0; i < l.weight.numel(); ++i) {
        const float w = l.weight.data[i];
        if (w > 0.0f)
          l.weight.grad[i] += cfg.lambda_reg;
        else if (w < 0.0f)
          l.weight.grad[i] -= cfg.lambda_reg;
      }
    }
    return;
  }

  if (cfg.kind == RegKind::Sawtooth) {
    for (std::size_t pi = 0; pi < np && pi < m.regularized_param_layers;
         ++pi) {
      Layer& l = m.param_layer(pi);
      l.weight.ensure_grad();
      const float p = scale_for(cfg, scales, pi);
      for (std::size_t i = 0; i < l.weight.numel(); ++i)
        l.weight.grad[i] +=
            static_cast<float>(lambda_now) *
            sawtooth_subgradient(l.weight.data[i], p, cfg.saw.clamp_levels);
    }
    return;
  }

  for (const GroupView& g : parameter_groups(m)) {
    Layer& l = m.param_layer(g.param_layer);
    if (cfg.kind == RegKind::GroupLasso) {
      if (g.param_layer >= m.regularized_param_layers) continue;
      if (!cfg.group_fc && l.spec.kind == LayerKind::FC) continue;
      l.weight.ensure_grad();
      const float* w = l.weight.data.data() + g.offset;
      const double norm = group_l2_norm(w, g.size);
      if (norm == 0.0) continue;  // non-differentiable at a zero-norm group
      for (std::size_t i = 0; i < g.size; ++i)
        l.weight.grad[g.offset + i] +=
            static_cast<float>(cfg.lambda_reg * w[i] / norm);
      continue;
    }

    // GroupSawtooth
    if (!group_included(m, cfg, g.param_layer)) continue;
    l.weight.ensure_grad();
    const float p = scale_for(cfg, scales, g.param_layer);
    const int a = cfg.saw.clamp_levels;
    const float* w = l.weight.data.data() + g.offset;
    switch (cfg.group_gamma) {
      case GroupGamma::GroupNorm: {
        const double norm = group_l2_norm(w, g.size);
        if (norm == 0.0) break;
        const float gdot =
            sawtooth_subgradient(static_cast<float>(norm), p, a);
        if (gdot == 0.0f) break;
        for (std::size_t i = 0; i < g.size; ++i)
          l.weight.grad[g.offset + i] +=
              static_cast<float>(lambda_now * gdot * w[i] / norm);
        break;
      }
      case GroupGamma::ResidualNorm: {
        double s = 0.0;
        for (std::size_t i = 0; i < g.size; ++i) {
          const double r = sawtooth(w[i], p, a);
          s += r * r;
        }
        const double norm = std::sqrt(s);
        if (norm == 0.0) break;
        for (std::size_t i = 0; i < g.size; ++i) {
          const float sub = sawtooth_subgradient(w[i], p, a);
          if (sub == 0.0f) continue;
          // d/dw ||r|| = (r_i/||r||) * dr_i/dw; sub = sign(r_i)'s slope / p.
          const double r = sawtooth(w[i], p, a);
          l.weight.grad[g.offset + i] +=
              static_cast<float>(lambda_now * (r / norm) * sub);
        }
        break;
      }
      case GroupGamma::Elementwise:
        for (std::size_t i = 0; i < g.size; ++i)
          l.weight.grad[g.offset + i] +=
              static_cast<float>(lambda_now) * sawtooth_subgradient(w[i], p, a);
        break;
    }
  }
}

double mean_weight_sawtooth(const Model& m, const std::vector<float>& scales,
                            int clamp_levels) {
  double total = 0.0;
  std::size_t count = 0;
  const std::size_t np = m.param_layer_count();
  for (std::size_t pi = 0; pi < np && pi < m.regularized_param_layers; ++pi) {
    const float p = pi < scales.size() && scales[pi] > 0.0f ? scales[pi] : 1.0f;
    for (const float w : m.param_layer(pi).weight.data) {
      total += sawtooth(w, p, clamp_levels);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double level_mass(const Model& m, const std::vector<float>& scales,
                  double band) {
  std::size_t close = 0, count = 0;
  const std::size_t np = m.param_layer_count();
  for (std::size_t pi = 0; pi < np && pi < m.regularized_param_layers; ++pi) {
    const double p =
        pi < scales.size() && scales[pi] > 0.0f ? scales[pi] : 1.0;
    for (const float w : m.param_layer(pi).weight.data) {
      const double x = w / p;
      if (std::fabs(x - std::nearbyint(x)) <= band) ++close;
      ++count;
    }
  }
  return count == 0 ? 0.0 : static_cast<double>(close) / count;
}

}  // namespace prunix
