#include "prunix/crossbar.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "prunix/errors.hpp"
#include "prunix/kernels.hpp"
#include "prunix/nn.hpp"
#include "prunix/rng.hpp"

namespace prunix {

namespace {

struct UnrollDims {
  std::size_t in_h, in_w, out_h, out_w, rows, cols;
};

UnrollDims unroll_dims(const Tensor& kernel,
                       std::pair<std::size_t, std::size_t> input_hw,
                       std::pair<std::size_t, std::size_t> stride,
                       std::size_t pad) {
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3))
    throw std::invalid_argument("unroll_conv: kernel must be [N,C,K,K]");
  const std::size_t k = kernel.dim(2);
  const auto [m, n] = input_hw;
  const auto [sh, sw] = stride;
  if (sh == 0 || sw == 0)
    throw std::invalid_argument("unroll_conv: stride must be positive");
  if (k > m + 2 * pad || k > n + 2 * pad)
    throw std::invalid_argument("unroll_conv: kernel does not fit input");
  if ((m + 2 * pad - k) % sh != 0 || (n + 2 * pad - k) % sw != 0)
    throw std::invalid_argument("unroll_conv: output dims not integral");
  UnrollDims d;
  d.in_h = m;
  d.in_w = n;
  d.out_h = (m + 2 * pad - k) / sh + 1;
  d.out_w = (n + 2 * pad - k) / sw + 1;
  d.rows = kernel.dim(1) * m * n;
  d.cols = kernel.dim(0) * d.out_h * d.out_w;
  return d;
}

// Walk every (filter, output position, channel, tap) and call f with the
// matrix coordinates and the kernel flat index. Taps over padding are skipped.
template <typename F>
void for_each_tap(const Tensor& kernel, const UnrollDims& d,
                  std::pair<std::size_t, std::size_t> stride, std::size_t pad,
                  F&& f) {
  const std::size_t filters = kernel.dim(0), ch = kernel.dim(1),
                    k = kernel.dim(2);
  const auto [sh, sw] = stride;
  for (std::size_t nf = 0; nf < filters; ++nf) {
    for (std::size_t oy = 0; oy < d.out_h; ++oy) {
      for (std::size_t ox = 0; ox < d.out_w; ++ox) {
        const std::size_t col = (nf * d.out_h + oy) * d.out_w + ox;
        for (std::size_t c = 0; c < ch; ++c) {
          for (std::size_t u = 0; u < k; ++u) {
            const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * sh + u) -
                                     static_cast<std::ptrdiff_t>(pad);
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const std::ptrdiff_t x =
                  static_cast<std::ptrdiff_t>(ox * sw + v) -
                  static_cast<std::ptrdiff_t>(pad);
              if (x < 0 || x >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
              const std::size_t row =
                  (c * d.in_h + static_cast<std::size_t>(y)) * d.in_w +
                  static_cast<std::size_t>(x);
              const std::size_t kidx = ((nf * ch + c) * k + u) * k + v;
              f(row, col, kidx);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Matrix unroll_conv(const Tensor& kernel,
                   std::pair<std::size_t, std::size_t> input_hw,
                   std::pair<std::size_t, std::size_t> stride,
                   std::size_t pad) {
  const UnrollDims d = unroll_dims(kernel, input_hw, stride, pad);
  Matrix out;
  out.rows = d.rows;
  out.cols = d.cols;
  out.data.assign(d.rows * d.cols, 0.0f);
  for_each_tap(kernel, d, stride, pad,
               [&](std::size_t r, std::size_t c, std::size_t kidx) {
                 out.data[r * d.cols + c] = kernel.data[kidx];
               });
  return out;
}

std::size_t CrossbarPair::cell_count() const {
  std::size_t taps = 0;
  for (const std::uint8_t t : tap) taps += t;
  return 2 * taps;
}

namespace {

float eff_conductance(std::int32_t level, const CellFault& f, float p) {
  if (f.stuck_off) return 0.0f;
  std::int32_t lv = level;
  if (f.max_level >= 0 && lv > f.max_level) lv = f.max_level;
  const float g = static_cast<float>(lv) * p + f.drift;
  return g > 0.0f ? g : 0.0f;
}

}  // namespace

void CrossbarPair::rebuild_effective() {
  eff.resize(rows * cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    eff[i] = eff_conductance(g_pos[i], fault_pos[i], scale) -
             eff_conductance(g_neg[i], fault_neg[i], scale);
}

std::vector<float> vmm(const std::vector<float>& voltages,
                       const CrossbarPair& pair) {
  if (voltages.size() != pair.rows)
    throw std::invalid_argument("vmm: voltage length does not match word-lines");
  std::vector<float> currents(pair.cols, 0.0f);
  for (std::size_t i = 0; i < pair.rows; ++i)
    kern::axpy(currents.data(), voltages[i], pair.eff.data() + i * pair.cols,
               pair.cols);
  return currents;
}

std::vector<CrossbarPair> map_model(const Model& m, const QuantScheme& scheme) {
  if (!model_is_quantized(m, scheme))
    throw std::invalid_argument("map_model: model is not quantized");
  const auto shapes = layer_input_shapes(m);
  std::vector<CrossbarPair> pairs;
  std::size_t pi = 0;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    if (!l.spec.has_params()) continue;
    const float p = scheme.per_layer_scale[pi];
    const int a = scheme.clamp_levels;

    CrossbarPair pair;
    pair.layer_name = l.spec.name;
    pair.param_layer = pi;
    pair.scale = p;
    pair.full_levels = full_scale_levels(scheme.bits);
    double mean_abs = 0.0;
    for (const float w : l.weight.data) mean_abs += std::fabs(w);
    pair.mean_abs_weight =
        static_cast<float>(mean_abs / static_cast<double>(l.weight.numel()));

    if (l.spec.kind == LayerKind::FC) {
      pair.rows = l.spec.in_features;
      pair.cols = l.spec.out_features;
      pair.g_pos.assign(pair.rows * pair.cols, 0);
      pair.g_neg.assign(pair.rows * pair.cols, 0);
      pair.tap.assign(pair.rows * pair.cols, 1);
      for (std::size_t j = 0; j < pair.cols; ++j) {
        for (std::size_t i = 0; i < pair.rows; ++i) {
          const std::int32_t lv =
              quantize_level(l.weight.data[j * pair.rows + i], p, a);
          if (lv >= 0)
            pair.g_pos[i * pair.cols + j] = lv;
          else
            pair.g_neg[i * pair.cols + j] = -lv;
        }
      }
    } else {
      const auto in = shapes[li];
      const UnrollDims d =
          unroll_dims(l.weight, {in[1], in[2]}, {l.spec.stride, l.spec.stride},
                      l.spec.pad);
      pair.rows = d.rows;
      pair.cols = d.cols;
      pair.g_pos.assign(pair.rows * pair.cols, 0);
      pair.g_neg.assign(pair.rows * pair.cols, 0);
      pair.tap.assign(pair.rows * pair.cols, 0);
      for_each_tap(l.weight, d, {l.spec.stride, l.spec.stride}, l.spec.pad,
                   [&](std::size_t r, std::size_t c, std::size_t kidx) {
                     const std::int32_t lv =
                         quantize_level(l.weight.data[kidx], p, a);
                     const std::size_t at = r * pair.cols + c;
                     pair.tap[at] = 1;
                     if (lv >= 0)
                       pair.g_pos[at] = lv;
                     else
                       pair.g_neg[at] = -lv;
                   });
    }
    pair.fault_pos.assign(pair.rows * pair.cols, CellFault{});
    pair.fault_neg.assign(pair.rows * pair.cols, CellFault{});
    pair.rebuild_effective();
    pairs.push_back(std::move(pair));
    ++pi;
  }
  return pairs;
}

std::vector<std::int32_t> readout_levels(const CrossbarPair& pair,
                                         const Model& m) {
  const Layer& l = m.param_layer(pair.param_layer);
  std::vector<std::int32_t> levels(l.weight.numel(), 0);
  if (l.spec.kind == LayerKind::FC) {
    for (std::size_t j = 0; j < pair.cols; ++j)
      for (std::size_t i = 0; i < pair.rows; ++i) {
        const std::size_t at = i * pair.cols + j;
        levels[j * pair.rows + i] = pair.g_pos[at] - pair.g_neg[at];
      }
    return levels;
  }
  const auto shapes = layer_input_shapes(m);
  std::size_t li = 0, pi = 0;
  for (; li < m.layers.size(); ++li) {
    if (!m.layers[li].spec.has_params()) continue;
    if (pi == pair.param_layer) break;
    ++pi;
  }
  const auto in = shapes[li];
  const UnrollDims d = unroll_dims(l.weight, {in[1], in[2]},
                                   {l.spec.stride, l.spec.stride}, l.spec.pad);
  std::vector<std::uint8_t> seen(levels.size(), 0);
  for_each_tap(l.weight, d, {l.spec.stride, l.spec.stride}, l.spec.pad,
               [&](std::size_t r, std::size_t c, std::size_t kidx) {
                 if (seen[kidx]) return;
                 seen[kidx] = 1;
                 const std::size_t at = r * pair.cols + c;
                 levels[kidx] = pair.g_pos[at] - pair.g_neg[at];
               });
  return levels;
}

namespace {

struct CellRef {
  std::size_t pair;
  std::uint8_t polarity;  // 0 '+', 1 '-'
  std::size_t cell;
};

std::vector<CellRef> enumerate_cells(const std::vector<CrossbarPair>& pairs) {
  std::vector<CellRef> cells;
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const CrossbarPair& p = pairs[pi];
    for (std::uint8_t pol = 0; pol < 2; ++pol)
      for (std::size_t i = 0; i < p.tap.size(); ++i)
        if (p.tap[i]) cells.push_back({pi, pol, i});
  }
  return cells;
}

// First count entries of a seeded partial Fisher-Yates over the cells.
std::vector<CellRef> choose_cells(std::vector<CellRef> cells,
                                  std::size_t count, Rng& rng) {
  count = std::min(count, cells.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(cells.size() - i));
    std::swap(cells[i], cells[j]);
  }
  cells.resize(count);
  return cells;
}

CellFault& fault_at(std::vector<CrossbarPair>& pairs, const CellRef& ref) {
  CrossbarPair& p = pairs[ref.pair];
  return ref.polarity == 0 ? p.fault_pos[ref.cell] : p.fault_neg[ref.cell];
}

std::size_t total_cells(const std::vector<CrossbarPair>& pairs) {
  std::size_t n = 0;
  for (const CrossbarPair& p : pairs) n += p.cell_count();
  return n;
}

void rebuild_all(std::vector<CrossbarPair>& pairs) {
  for (CrossbarPair& p : pairs) p.rebuild_effective();
}

}  // namespace

std::vector<FaultRecord> inject_stuck_off(std::vector<CrossbarPair>& pairs,
                                          double fraction,
                                          std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("inject_stuck_off: fraction outside [0,1]");
  const std::size_t count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(total_cells(pairs))));
  Rng rng(derive_seed(seed, "stuck-off"));
  const auto chosen = choose_cells(enumerate_cells(pairs), count, rng);
  std::vector<FaultRecord> records;
  records.reserve(chosen.size());
  for (const CellRef& ref : chosen) {
    fault_at(pairs, ref).stuck_off = true;
    records.push_back(
        {ref.pair, ref.polarity == 0 ? '+' : '-', ref.cell, 'S', 0.0f});
  }
  rebuild_all(pairs);
  return records;
}

std::vector<FaultRecord> inject_drift(std::vector<CrossbarPair>& pairs,
                                      const DriftParams& drift,
                                      std::uint64_t seed) {
  if (drift.r < 0.0f)
    throw std::invalid_argument("inject_drift: r must be non-negative");
  if (drift.cell_fraction < 0.0f || drift.cell_fraction > 1.0f)
    throw std::invalid_argument("inject_drift: fraction outside [0,1]");
  std::vector<FaultRecord> records;
  if (drift.r == 0.0f || drift.cell_fraction == 0.0f) return records;

  const std::size_t count = static_cast<std::size_t>(std::llround(
      static_cast<double>(drift.cell_fraction) *
      static_cast<double>(total_cells(pairs))));
  Rng rng(derive_seed(seed, "drift"));
  const auto chosen = choose_cells(enumerate_cells(pairs), count, rng);
  records.reserve(chosen.size());
  for (const CellRef& ref : chosen) {
    const float w_hat = pairs[ref.pair].mean_abs_weight;
    const double bound = static_cast<double>(drift.r) * w_hat;
    float delta = 0.0f;
    if (bound > 0.0) {
      // truncated normal on [0, r*W], mean 0.2 r*W, std 0.1 r*W
      double d = -1.0;
      do {
        d = rng.normal(0.2 * bound, 0.1 * bound);
      } while (d < 0.0 || d > bound);
      delta = static_cast<float>(rng.coin() ? d : -d);
    }
    fault_at(pairs, ref).drift += delta;
    records.push_back(
        {ref.pair, ref.polarity == 0 ? '+' : '-', ref.cell, 'D', delta});
  }
  rebuild_all(pairs);
  return records;
}

std::vector<FaultRecord> inject_aging(std::vector<CrossbarPair>& pairs,
                                      const AgingParams& aging,
                                      std::uint64_t seed) {
  if (aging.cell_fraction < 0.0f || aging.cell_fraction > 1.0f)
    throw std::invalid_argument("inject_aging: fraction outside [0,1]");
  for (const CrossbarPair& p : pairs)
    if (aging.levels_lost < 0 || aging.levels_lost > p.full_levels)
      throw std::invalid_argument("inject_aging: levels_lost outside [0, 2^n-1]");

  const std::size_t count = static_cast<std::size_t>(std::llround(
      static_cast<double>(aging.cell_fraction) *
      static_cast<double>(total_cells(pairs))));
  Rng rng(derive_seed(seed, "aging"));
  const auto chosen = choose_cells(enumerate_cells(pairs), count, rng);
  std::vector<FaultRecord> records;
  records.reserve(chosen.size());
  for (const CellRef& ref : chosen) {
    const std::int32_t limit =
        pairs[ref.pair].full_levels - aging.levels_lost;
    CellFault& f = fault_at(pairs, ref);
    f.max_level = f.max_level < 0 ? limit : std::min(f.max_level, limit);
    records.push_back({ref.pair, ref.polarity == 0 ? '+' : '-', ref.cell, 'A',
                       static_cast<float>(limit)});
  }
  rebuild_all(pairs);
  return records;
}

void apply_fault_records(std::vector<CrossbarPair>& pairs,
                         const std::vector<FaultRecord>& records) {
  for (const FaultRecord& r : records) {
    if (r.pair >= pairs.size())
      throw DataError("fault record refers to unknown crossbar pair");
    CrossbarPair& p = pairs[r.pair];
    if (r.cell >= p.tap.size() || !p.tap[r.cell])
      throw DataError("fault record refers to an unmapped cell");
    CellFault& f =
        r.polarity == '+' ? p.fault_pos[r.cell] : p.fault_neg[r.cell];
    switch (r.kind) {
      case 'S':
        f.stuck_off = true;
        break;
      case 'D':
        f.drift += r.value;
        break;
      case 'A': {
        const std::int32_t limit = static_cast<std::int32_t>(r.value);
        f.max_level = f.max_level < 0 ? limit : std::min(f.max_level, limit);
        break;
      }
      default:
        throw DataError("unknown fault kind in record");
    }
  }
  rebuild_all(pairs);
}

Tensor forward_on_crossbar(const std::vector<CrossbarPair>& pairs,
                           const Model& m, const Tensor& input) {
  const auto shapes = layer_input_shapes(m);
  Tensor x = input;
  std::size_t pi = 0;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    switch (l.spec.kind) {
      case LayerKind::Conv: {
        const CrossbarPair& pair = pairs.at(pi++);
        std::vector<float> v(x.data.begin(), x.data.end());
        std::vector<float> currents = vmm(v, pair);
        const auto in = shapes[li];
        const nn::ConvDims d = nn::conv_output_dims(
            in[1], in[2], l.spec.kernel, l.spec.stride, l.spec.pad);
        Tensor y({l.spec.filters, d.out_h, d.out_w});
        y.data.assign(currents.begin(), currents.end());
        const std::size_t hw = d.out_h * d.out_w;
        for (std::size_t f = 0; f < l.spec.filters; ++f)
          kern::add_const(y.data.data() + f * hw, l.bias.data[f], hw);
        x = std::move(y);
        break;
      }
      case LayerKind::FC: {
        const CrossbarPair& pair = pairs.at(pi++);
        std::vector<float> v(x.data.begin(), x.data.end());
        std::vector<float> currents = vmm(v, pair);
        Tensor y({l.spec.out_features});
        for (std::size_t i = 0; i < y.numel(); ++i)
          y.data[i] = currents[i] + l.bias.data[i];
        x = std::move(y);
        break;
      }
      case LayerKind::ReLU:
        x = nn::relu(x);
        break;
      case LayerKind::MaxPool:
        x = nn::maxpool2d(x, l.spec.window);
        break;
    }
  }
  return x;
}

double evaluate_on_crossbar(const std::vector<CrossbarPair>& pairs,
                            const Model& m, const Dataset& ds,
                            const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("evaluate_on_crossbar: empty dataset");
  std::size_t correct = 0;
  for (const std::size_t i : indices) {
    const Tensor logits = forward_on_crossbar(pairs, m, ds.image(i));
    if (argmax_class(logits) == static_cast<std::size_t>(ds.label(i)))
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace prunix
