#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prunix/dataset.hpp"
#include "prunix/model.hpp"
#include "prunix/quantizer.hpp"
#include "prunix/tensor.hpp"

namespace prunix {

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<float> data;  // row-major

  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Doubly-block-Toeplitz equivalent kernel matrix: rows indexed by the
// flattened (channel, y, x) input, columns by the flattened (filter, oy, ox)
// output. Taps that would fall on zero padding are omitted, so the matrix
// acts on the unpadded flattened input: rows = C*M*N per Eq-style dimension
// bookkeeping, cols = F * ((M-K+2P)/Sh+1) * ((N-K+2P)/Sw+1).
Matrix unroll_conv(const Tensor& kernel,
                   std::pair<std::size_t, std::size_t> input_hw,
                   std::pair<std::size_t, std::size_t> stride,
                   std::size_t pad);

// Per-cell non-ideality state. max_level < 0 means no aging limit.
struct CellFault {
  bool stuck_off = false;
  std::int32_t max_level = -1;
  float drift = 0.0f;  // signed conductance offset, weight units
};

// Differential pair of conductance matrices for one Conv/FC layer. Cells
// store programmed level indices; `tap` marks positions backed by a weight
// (structural zeros of the unrolled form carry no device and take no
// faults). `eff` caches the faulted signed weight matrix used by vmm().
struct CrossbarPair {
  std::string layer_name;
  std::size_t param_layer = 0;
  std::size_t rows = 0, cols = 0;  // H word-lines, B bit-lines
  float scale = 1.0f;              // level period p
  int full_levels = 15;            // 2^n - 1
  float mean_abs_weight = 0.0f;    // layer mean |w|, drift reference
  std::vector<std::int32_t> g_pos, g_neg;
  std::vector<std::uint8_t> tap;
  std::vector<CellFault> fault_pos, fault_neg;
  std::vector<float> eff;

  std::size_t cell_count() const;  // tap cells, both polarities
  void rebuild_effective();
  float effective_weight(std::size_t r, std::size_t c) const {
    return eff[r * cols + c];
  }
};

// I_j = sum_i V_i * (Gpos - Gneg)_ij with faults applied.
std::vector<float> vmm(const std::vector<float>& voltages,
                       const CrossbarPair& pair);

// One pair per Conv/FC layer; requires a quantized model (every weight on its
// level grid), throws std::invalid_argument otherwise.
std::vector<CrossbarPair> map_model(const Model& m, const QuantScheme& scheme);

// Signed level readout of the mapped weight tensor (first structural
// occurrence of each weight), from programmed levels, faults ignored.
std::vector<std::int32_t> readout_levels(const CrossbarPair& pair,
                                         const Model& m);

struct DriftParams {
  float r = 0.0f;            // variation range parameter
  float cell_fraction = 0.0f;
};

struct AgingParams {
  float cell_fraction = 0.0f;
  int levels_lost = 0;
};

struct FaultRecord {
  std::size_t pair = 0;
  char polarity = '+';  // '+' or '-'
  std::size_t cell = 0; // flat row*cols+col
  char kind = 'S';      // 'S' stuck-off, 'D' drift, 'A' aging
  float value = 0.0f;   // drift delta or aged max_level
};

// Each injector flags exactly round(fraction * cell_count) uniformly chosen
// tap cells across all pairs, deterministically in the seed, and returns the
// record list for replay.
std::vector<FaultRecord> inject_stuck_off(std::vector<CrossbarPair>& pairs,
                                          double fraction, std::uint64_t seed);
std::vector<FaultRecord> inject_drift(std::vector<CrossbarPair>& pairs,
                                      const DriftParams& drift,
                                      std::uint64_t seed);
std::vector<FaultRecord> inject_aging(std::vector<CrossbarPair>& pairs,
                                      const AgingParams& aging,
                                      std::uint64_t seed);
void apply_fault_records(std::vector<CrossbarPair>& pairs,
                         const std::vector<FaultRecord>& records);

Tensor forward_on_crossbar(const std::vector<CrossbarPair>& pairs,
                           const Model& m, const Tensor& input);
double evaluate_on_crossbar(const std::vector<CrossbarPair>& pairs,
                            const Model& m, const Dataset& ds,
                            const std::vector<std::size_t>& indices);

}  // namespace prunix
