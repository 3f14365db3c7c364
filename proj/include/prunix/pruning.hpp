#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prunix/model.hpp"

namespace prunix {

struct PruneParams {
  float lambda_p = 0.5f;   // initial pruning rate
  float mu = 0.7f;         // fraction of the rate spent on unstructured pruning
  float sigma = 0.02f;     // per-layer accuracy-loss tolerance
  float gamma = 0.5f;      // rate decrease factor
  float lambda_min = 0.01f;  // termination floor
  bool reset_lambda = true;  // restart the rate at lambda_p per layer
};

// Per parameter layer, 1 marks a permanently-zero weight. Masked weights are
// re-zeroed after every optimizer step.
struct PruneMask {
  std::vector<std::vector<std::uint8_t>> layers;

  static PruneMask for_model(const Model& m);
  std::size_t pruned_count() const;
  bool empty_mask() const;
};

void apply_mask(Model& m, const PruneMask& mask);     // zero masked weights
void mask_gradients(Model& m, const PruneMask& mask); // zero masked grads

// Masks the floor(rate * unmasked) smallest-magnitude unmasked weights of
// parameter layer pi; ties break to the lowest flat index. Returns the number
// of newly masked weights.
std::size_t unstructured_prune(Model& m, PruneMask& mask, std::size_t pi,
                               float rate);
// Masks the floor(rate * unmasked_filters) lowest-L1 filters of a Conv layer;
// throws std::invalid_argument on FC layers.
std::size_t filter_prune(Model& m, PruneMask& mask, std::size_t pi, float rate);

struct LayerSparsity {
  std::string name;
  bool is_conv = false;
  std::size_t zeros = 0, total = 0;
  std::size_t zero_groups = 0, groups = 0;  // filters (Conv) or rows (FC)
  double element_pct = 0.0;
  double group_pct = 0.0;
};

struct SparsityReport {
  double overall_element_pct = 0.0;
  double conv_filter_pct = 0.0;
  std::vector<LayerSparsity> per_layer;
};

// Counts exact zeros over Conv+FC weight tensors (biases excluded).
SparsityReport measure_sparsity(const Model& m);

struct ApaStep {
  std::size_t param_layer = 0;
  bool accepted = false;
  float rate = 0.0f;     // accepted rate, 0 when the layer was left unpruned
  double acc_loss = 0.0; // measured loss of the accepted attempt
  int attempts = 0;
};

struct ApaResult {
  double baseline_accuracy = 0.0;
  std::vector<ApaStep> steps;
  SparsityReport report;
};

// Adaptive pruning: per layer, attempt at the current rate, undo and decay on
// a tolerance violation, accept otherwise; the layer loop exits on acceptance
// or when the rate falls below lambda_min. Conv layers take unstructured
// rate*mu plus filter rate*(1-mu); FC layers unstructured rate*mu only.
ApaResult adaptive_prune(Model& m, PruneMask& mask, const PruneParams& params,
                         const std::function<double(const Model&)>& eval);

// Single pass at a uniform rate on every layer, no accuracy feedback.
void global_prune(Model& m, PruneMask& mask, float rate, float mu);

}  // namespace prunix
