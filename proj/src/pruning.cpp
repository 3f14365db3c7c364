#include "prunix/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prunix {

PruneMask PruneMask::for_model(const Model& m) {
  PruneMask mask;
  const auto idx = m.param_layer_indices();
  for (const std::size_t li : idx)
    mask.layers.emplace_back(m.layers[li].weight.numel(), 0);
  return mask;
}

std::size_t PruneMask::pruned_count() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    for (const std::uint8_t x : l) n += x;
  return n;
}

bool PruneMask::empty_mask() const { return pruned_count() == 0; }

void apply_mask(Model& m, const PruneMask& mask) {
  const auto idx = m.param_layer_indices();
  for (std::size_t pi = 0; pi < idx.size(); ++pi) {
    Tensor& w = m.layers[idx[pi]].weight;
    const auto& lm = mask.layers[pi];
    for (std::size_t i = 0; i < w.numel(); ++i)
      if (lm[i]) w.data[i] = 0.0f;
  }
}

void mask_gradients(Model& m, const PruneMask& mask) {
  const auto idx = m.param_layer_indices();
  for (std::size_t pi = 0; pi < idx.size(); ++pi) {
    Tensor& w = m.layers[idx[pi]].weight;
    if (!w.has_grad()) continue;
    const auto& lm = mask.layers[pi];
    for (std::size_t i = 0; i < w.numel(); ++i)
      if (lm[i]) w.grad[i] = 0.0f;
  }
}

std::size_t unstructured_prune(Model& m, PruneMask& mask, std::size_t pi,
                               float rate) {
  if (rate < 0.0f || rate > 1.0f)
    throw std::invalid_argument("unstructured_prune: rate outside [0,1]");
  Layer& l = m.param_layer(pi);
  auto& lm = mask.layers.at(pi);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < l.weight.numel(); ++i)
    if (!lm[i]) candidates.push_back(i);
  const std::size_t count = static_cast<std::size_t>(
      static_cast<double>(rate) * static_cast<double>(candidates.size()));
  if (count == 0) return 0;

  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) {
                     const float fa = std::fabs(l.weight.data[a]);
                     const float fb = std::fabs(l.weight.data[b]);
                     if (fa != fb) return fa < fb;
                     return a < b;
                   });
  for (std::size_t i = 0; i < count; ++i) {
    lm[candidates[i]] = 1;
    l.weight.data[candidates[i]] = 0.0f;
  }
  return count;
}

std::size_t filter_prune(Model& m, PruneMask& mask, std::size_t pi,
                         float rate) {
  if (rate < 0.0f || rate > 1.0f)
    throw std::invalid_argument("filter_prune: rate outside [0,1]");
  Layer& l = m.param_layer(pi);
  if (l.spec.kind != LayerKind::Conv)
    throw std::invalid_argument("filter_prune: layer is not convolutional");
  auto& lm = mask.layers.at(pi);

  const std::size_t filters = l.spec.filters;
  const std::size_t fsize = l.weight.numel() / filters;

  std::vector<std::size_t> candidates;  // filters not yet fully masked
  for (std::size_t f = 0; f < filters; ++f) {
    bool fully = true;
    for (std::size_t i = 0; i < fsize && fully; ++i)
      if (!lm[f * fsize + i]) fully = false;
    if (!fully) candidates.push_back(f);
  }
  const std::size_t count = static_cast<std::size_t>(
      static_cast<double>(rate) * static_cast<double>(candidates.size()));
  if (count == 0) return 0;

  std::vector<double> l1(filters, 0.0);
  for (const std::size_t f : candidates)
    for (std::size_t i = 0; i < fsize; ++i)
      l1[f] += std::fabs(l.weight.data[f * fsize + i]);

  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (l1[a] != l1[b]) return l1[a] < l1[b];
                     return a < b;
                   });
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t f = candidates[i];
    for (std::size_t j = 0; j < fsize; ++j) {
      lm[f * fsize + j] = 1;
      l.weight.data[f * fsize + j] = 0.0f;
    }
  }
  return count;
}

SparsityReport measure_sparsity(const Model& m) {
  SparsityReport rep;
  std::size_t zeros = 0, total = 0;
  std::size_t conv_zero_filters = 0, conv_filters = 0;
  for (const Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    LayerSparsity ls;
    ls.name = l.spec.name;
    ls.is_conv = l.spec.kind == LayerKind::Conv;
    ls.total = l.weight.numel();
    for (const float w : l.weight.data)
      if (w == 0.0f) ++ls.zeros;

    ls.groups =
        ls.is_conv ? l.spec.filters : l.spec.out_features;
    const std::size_t gsize = ls.total / ls.groups;
    for (std::size_t g = 0; g < ls.groups; ++g) {
      bool all_zero = true;
      for (std::size_t i = 0; i < gsize && all_zero; ++i)
        if (l.weight.data[g * gsize + i] != 0.0f) all_zero = false;
      if (all_zero) ++ls.zero_groups;
    }
    ls.element_pct = 100.0 * static_cast<double>(ls.zeros) /
                     static_cast<double>(ls.total);
    ls.group_pct = 100.0 * static_cast<double>(ls.zero_groups) /
                   static_cast<double>(ls.groups);
    zeros += ls.zeros;
    total += ls.total;
    if (ls.is_conv) {
      conv_zero_filters += ls.zero_groups;
      conv_filters += ls.groups;
    }
    rep.per_layer.push_back(std::move(ls));
  }
  rep.overall_element_pct =
      total == 0 ? 0.0 : 100.0 * static_cast<double>(zeros) / total;
  rep.conv_filter_pct = conv_filters == 0
                            ? 0.0
                            : 100.0 * static_cast<double>(conv_zero_filters) /
                                  conv_filters;
  return rep;
}

namespace {

void prune_layer_at(Model& m, PruneMask& mask, std::size_t pi, float rate,
                    float mu) {
  const Layer& l = m.param_layer(pi);
  if (l.spec.kind == LayerKind::Conv) {
    unstructured_prune(m, mask, pi, rate * mu);
    filter_prune(m, mask, pi, rate * (1.0f - mu));
  } else {
    unstructured_prune(m, mask, pi, rate * mu);
  }
}

}  // namespace

ApaResult adaptive_prune(Model& m, PruneMask& mask, const PruneParams& params,
                         const std::function<double(const Model&)>& eval) {
  ApaResult res;
  res.baseline_accuracy = eval(m);

  const std::size_t np = m.param_layer_count();
  float lambda = params.lambda_p;
  for (std::size_t pi = 0; pi < np; ++pi) {
    if (params.reset_lambda) lambda = params.lambda_p;
    ApaStep step;
    step.param_layer = pi;

    while (lambda >= params.lambda_min) {
      Layer& l = m.param_layer(pi);
      const std::vector<float> weights_snapshot = l.weight.data;
      const std::vector<std::uint8_t> mask_snapshot = mask.layers[pi];

      prune_layer_at(m, mask, pi, lambda, params.mu);
      const double loss = res.baseline_accuracy - eval(m);
      ++step.attempts;

      if (loss > params.sigma) {
        // undo and decay
        m.param_layer(pi).weight.data = weights_snapshot;
        mask.layers[pi] = mask_snapshot;
        lambda *= params.gamma;
      } else {
        step.accepted = true;
        step.rate = lambda;
        step.acc_loss = loss;
        break;
      }
    }
    res.steps.push_back(step);
  }
  res.report = measure_sparsity(m);
  return res;
}

void global_prune(Model& m, PruneMask& mask, float rate, float mu) {
  if (rate < 0.0f || rate > 1.0f)
    throw std::invalid_argument("global_prune: rate outside [0,1]");
  const std::size_t np = m.param_layer_count();
  for (std::size_t pi = 0; pi < np; ++pi)
    prune_layer_at(m, mask, pi, rate, mu);
}

}  // namespace prunix
