#pragma once

#include <string>
#include <vector>

#include "prunix/model.hpp"

namespace prunix {

// Sawtooth penalty parameters: level period p (weight units), clamp bound a
// (level units), group coefficient and its per-epoch relaxation factor.
struct SawtoothParams {
  float period = 0.0f;  // 0 means "use the calibrated per-layer scale"
  int clamp_levels = 15;
  float lambda_s = 1e-4f;
  float decay = 0.8f;
};

enum class RegKind { GroupSawtooth, Sawtooth, GroupLasso, L1, None };

// How the sawtooth residual of a weight group is reduced to a scalar.
//   GroupNorm:      sawtooth applied to the group's L2 norm
//   ResidualNorm:   L2 norm of the elementwise sawtooth residuals
//   Elementwise:    plain sum of elementwise sawtooth values
enum class GroupGamma { GroupNorm, ResidualNorm, Elementwise };

struct RegularizerConfig {
  RegKind kind = RegKind::GroupSawtooth;
  SawtoothParams saw;
  float lambda_reg = 1e-4f;  // L1 / group-lasso coefficient
  GroupGamma group_gamma = GroupGamma::GroupNorm;
  bool group_fc = true;  // treat FC rows as groups in the group penalties
};

RegKind parse_reg_kind(const std::string& name);
GroupGamma parse_group_gamma(const std::string& name);
const char* reg_kind_name(RegKind k);

// |clamp(w/p, a) - floor(w/p + 1/2)|; zero exactly on the level grid.
float sawtooth(float w, float p, int a);
// sign(clamp - round)/p inside the clamp range; zero beyond it, at exact
// levels, and at the half-period kinks.
float sawtooth_subgradient(float w, float p, int a);

// lambda_s * decay^epoch
float relax_lambda(float lambda_s, float decay, int epoch);

// scales[i] is the level period of parameter layer i; layers at or beyond
// model.regularized_param_layers are skipped. lambda_override < 0 keeps the
// configured coefficient.
double group_sawtooth_loss(const Model& m, const RegularizerConfig& cfg,
                           const std::vector<float>& scales,
                           double lambda_override = -1.0);
double group_lasso_penalty(const Model& m, float lambda_reg, bool group_fc);
double l1_penalty(const Model& m, float lambda_reg);

// Penalty value of whatever regularizer cfg selects, at coefficient
// lambda_now (group/elementwise sawtooth) or cfg.lambda_reg (baselines).
double regularizer_penalty(const Model& m, const RegularizerConfig& cfg,
                           const std::vector<float>& scales, double lambda_now);
// Accumulates the penalty subgradient into the weight grad buffers.
void add_regularizer_gradient(Model& m, const RegularizerConfig& cfg,
                              const std::vector<float>& scales,
                              double lambda_now);

// Mean elementwise sawtooth over all regularized weights (alignment metric).
double mean_weight_sawtooth(const Model& m, const std::vector<float>& scales,
                            int clamp_levels);
// Fraction of regularized weights within +/- band*p of a level multiple.
double level_mass(const Model& m, const std::vector<float>& scales,
                  double band);

}  // namespace prunix
