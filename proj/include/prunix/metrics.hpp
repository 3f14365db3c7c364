#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "prunix/crossbar.hpp"
#include "prunix/model.hpp"
#include "prunix/pruning.hpp"

namespace prunix {

// One row of the run log. NaN-valued fields serialize as JSON null / empty
// CSV cells. `params` carries axis values and fault parameters when present.
struct MetricsRecord {
  std::string stage;
  int epoch = -1;
  double train_loss = kUnset;
  double val_acc = kUnset;
  double test_acc = kUnset;
  double sparsity_pct = kUnset;
  double lambda_s = kUnset;
  double mean_gamma = kUnset;
  double level_mass = kUnset;
  std::vector<std::pair<std::string, double>> params;

  static constexpr double kUnset = -1.0e308;
  static bool is_set(double v) { return v != kUnset; }
};

// Shortest round-trip decimal form; deterministic across runs.
std::string format_number(double v);

// Appends each record to <dir>/metrics.jsonl and <dir>/metrics.csv.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& dir);
  void append(const MetricsRecord& rec);

 private:
  std::ofstream jsonl_, csv_;
};

void write_sparsity_report(const std::string& dir, const SparsityReport& rep);

// Per-layer weight histograms (64 bins over +/- max|w|), one row per bin.
void write_weight_histogram(const std::string& path, const Model& m);

void write_fault_records(const std::string& path,
                         const std::vector<FaultRecord>& records,
                         const std::vector<std::pair<std::string, double>>&
                             params);
std::vector<FaultRecord> read_fault_records(const std::string& path);

}  // namespace prunix
