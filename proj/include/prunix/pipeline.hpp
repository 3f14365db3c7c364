#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunix/config.hpp"
#include "prunix/crossbar.hpp"
#include "prunix/dataset.hpp"
#include "prunix/metrics.hpp"
#include "prunix/model.hpp"
#include "prunix/pruning.hpp"
#include "prunix/quantizer.hpp"
#include "prunix/regularizer.hpp"

namespace prunix {

struct PipelineConfig {
  std::string dataset_path;
  DataFormat dataset_format = DataFormat::csv;
  double split_train = 0.7, split_val = 0.1, split_test = 0.2;
  int num_classes = 10;
  std::string arch = "desk";

  int epochs_initial = 20;
  int epochs_regularized = 20;
  int epochs_finetune = 10;
  float lr = 0.05f;
  float lr_decay = 1.0f;
  int batch_size = 32;

  RegularizerConfig reg;
  int quant_bits = 4;
  int quant_clamp = -1;  // -1: 2^bits - 1

  PruneParams prune;
  bool prune_global = false;
  float global_rate = -1.0f;  // <0: use prune.lambda_p

  double drift_fraction = 0.3;
  double aging_fraction = 0.3;
  int aging_levels = 4;
  int sweep_reps = 5;

  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string stages = "initial,regularized";

  static PipelineConfig from_config(const Config& c);
  QuantScheme scheme() const;  // bits + clamp, scales uncalibrated
};

// Mutable state threaded through the stages and carried by checkpoints.
struct PipelineState {
  Model model;
  PruneMask mask;
  std::vector<float> scales;  // frozen per-layer level periods
  bool quantized = false;
};

Dataset load_pipeline_dataset(const PipelineConfig& cfg);
Split make_split(const PipelineConfig& cfg, std::size_t n);

void stage_initial_train(PipelineState& st, const PipelineConfig& cfg,
                         const Dataset& ds, const Split& split,
                         MetricsWriter* mw);
void stage_regularized_train(PipelineState& st, const PipelineConfig& cfg,
                             const Dataset& ds, const Split& split,
                             MetricsWriter* mw);
ApaResult stage_prune_quantize(PipelineState& st, const PipelineConfig& cfg,
                               const Dataset& ds, const Split& split,
                               MetricsWriter* mw);
void stage_fine_tune(PipelineState& st, const PipelineConfig& cfg,
                     const Dataset& ds, const Split& split, MetricsWriter* mw);

enum class SweepAxis { bits, drift_r, stuck_fraction, aging };
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepPoint {
  double value = 0.0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  std::vector<double> rep_acc;
};

std::vector<SweepPoint> run_sweep(const PipelineState& st,
                                  const PipelineConfig& cfg, const Dataset& ds,
                                  const Split& split, SweepAxis axis,
                                  const std::vector<double>& grid, int reps,
                                  MetricsWriter* mw);

// Command entry points shared by the CLI; checkpoints are chained under
// cfg.out_dir as ckpt_<stage>.ckpt.
void cmd_train(const PipelineConfig& cfg);
void cmd_prune(const PipelineConfig& cfg, const std::string& ckpt_in);
void cmd_quantize(const PipelineConfig& cfg, const std::string& ckpt_in);
void cmd_finetune(const PipelineConfig& cfg, const std::string& ckpt_in);

struct InjectArgs {
  double stuck_off = 0.0;
  double drift_r = 0.0;
  double drift_fraction = -1.0;   // <0: config default
  double aging_fraction = -1.0;   // <0: config default
  int aging_levels = -1;          // <0: config default
};
void cmd_inject(const PipelineConfig& cfg, const std::string& ckpt_in,
                const InjectArgs& args);
void cmd_eval(const PipelineConfig& cfg, const std::string& ckpt_in,
              const std::string& faults_path, bool on_crossbar);
void cmd_sweep(const PipelineConfig& cfg, const std::string& ckpt_in,
               const std::string& axis, const std::vector<double>& grid,
               int reps);
void cmd_report(const std::string& out_dir);

// Resolves an explicit checkpoint path or the most advanced stage checkpoint
// present under cfg.out_dir.
std::string resolve_checkpoint(const PipelineConfig& cfg,
                               const std::string& explicit_path);
PipelineState load_state(const PipelineConfig& cfg, const std::string& path);
void save_state(const PipelineConfig& cfg, const PipelineState& st,
                const std::string& stage);

}  // namespace prunix
