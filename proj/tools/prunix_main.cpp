// prunix command-line driver: train / prune / quantize / finetune / inject /
// eval / sweep / report / gen-data. Exit codes: 0 ok, 1 config error,
// 2 data error, 3 numerical failure.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunix/dataset.hpp"
#include "prunix/errors.hpp"
#include "prunix/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "config file (key = value lines)");
  cmd->add_option("--seed", c.seed, "seed override");
  cmd->add_option("--out", c.out_dir, "output directory override");
}

prunix::PipelineConfig load_cfg(const CommonOpts& c) {
  prunix::Config cfg = c.config_path.empty()
                           ? prunix::Config()
                           : prunix::Config::load(c.config_path);
  if (c.seed >= 0) cfg.set("seed", std::to_string(c.seed));
  if (!c.out_dir.empty()) cfg.set("out", c.out_dir);
  return prunix::PipelineConfig::from_config(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prunix: non-ideality aware CNN pruning toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the bundled 8x8 corpus");
  std::string gen_out = "digits8.csv";
  std::size_t per_class = 180;
  long long gen_seed = 1;
  gen->add_option("--out", gen_out, "output CSV path");
  gen->add_option("--per-class", per_class, "samples per class");
  gen->add_option("--seed", gen_seed, "generator seed");

  // train
  auto* train = app.add_subcommand("train", "run the training stages");
  CommonOpts train_c;
  add_common(train, train_c);
  std::string stages;
  train->add_option("--stages", stages,
                    "comma list: initial,regularized,prune_quantize,fine_tune");

  // prune
  auto* prune = app.add_subcommand("prune", "prune a trained checkpoint");
  CommonOpts prune_c;
  add_common(prune, prune_c);
  std::string prune_ckpt;
  double lambda_p = -1, mu = -1, sigma = -1, gamma = -1;
  bool global = false;
  prune->add_option("--ckpt", prune_ckpt, "input checkpoint");
  prune->add_option("--lambda-p", lambda_p, "initial pruning rate");
  prune->add_option("--mu", mu, "unstructured fraction of the rate");
  prune->add_option("--sigma", sigma, "per-layer accuracy-loss tolerance");
  prune->add_option("--gamma", gamma, "rate decrease factor");
  prune->add_flag("--global", global, "uniform global pruning baseline");

  // quantize
  auto* quant = app.add_subcommand("quantize", "quantize a checkpoint");
  CommonOpts quant_c;
  add_common(quant, quant_c);
  std::string quant_ckpt;
  int bits = -1;
  quant->add_option("--ckpt", quant_ckpt, "input checkpoint");
  quant->add_option("--bits", bits, "bit width override");

  // finetune
  auto* ft = app.add_subcommand("finetune", "fine-tune a quantized checkpoint");
  CommonOpts ft_c;
  add_common(ft, ft_c);
  std::string ft_ckpt;
  ft->add_option("--ckpt", ft_ckpt, "input checkpoint");

  // inject
  auto* inject = app.add_subcommand("inject", "map and inject non-idealities");
  CommonOpts inject_c;
  add_common(inject, inject_c);
  std::string inject_ckpt;
  prunix::InjectArgs ia;
  inject->add_option("--ckpt", inject_ckpt, "input checkpoint");
  inject->add_option("--stuck-off", ia.stuck_off, "stuck-off cell fraction");
  inject->add_option("--drift", ia.drift_r, "drift range parameter r");
  inject->add_option("--drift-fraction", ia.drift_fraction,
                     "fraction of cells drifting");
  inject->add_option("--aging-fraction", ia.aging_fraction,
                     "fraction of cells aged");
  inject->add_option("--aging-levels", ia.aging_levels, "levels lost to aging");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonOpts eval_c;
  add_common(eval, eval_c);
  std::string eval_ckpt, faults;
  bool crossbar = false;
  eval->add_option("--ckpt", eval_ckpt, "input checkpoint");
  eval->add_option("--faults", faults, "fault record file to replay");
  eval->add_flag("--crossbar", crossbar, "evaluate through the crossbar map");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run an experiment sweep");
  CommonOpts sweep_c;
  add_common(sweep, sweep_c);
  std::string sweep_ckpt, axis;
  std::vector<double> grid;
  int reps = -1;
  sweep->add_option("--ckpt", sweep_ckpt, "input checkpoint");
  sweep->add_option("--axis", axis, "bits | drift_r | stuck_fraction | aging")
      ->required();
  sweep->add_option("--grid", grid, "axis values")->delimiter(',');
  sweep->add_option("--reps", reps, "repetitions per grid point");

  // report
  auto* report = app.add_subcommand("report", "aggregate metrics into report.csv");
  std::string report_dir = "out";
  report->add_option("--out", report_dir, "metrics directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      prunix::generate_digits_corpus(gen_out, per_class,
                                     static_cast<std::uint64_t>(gen_seed));
      std::printf("wrote %s\n", gen_out.c_str());
    } else if (train->parsed()) {
      prunix::PipelineConfig cfg = load_cfg(train_c);
      if (!stages.empty()) cfg.stages = stages;
      prunix::cmd_train(cfg);
    } else if (prune->parsed()) {
      prunix::PipelineConfig cfg = load_cfg(prune_c);
      if (lambda_p >= 0) cfg.prune.lambda_p = static_cast<float>(lambda_p);
      if (mu >= 0) cfg.prune.mu = static_cast<float>(mu);
      if (sigma >= 0) cfg.prune.sigma = static_cast<float>(sigma);
      if (gamma >= 0) cfg.prune.gamma = static_cast<float>(gamma);
      if (global) cfg.prune_global = true;
      prunix::cmd_prune(cfg, prune_ckpt);
    } else if (quant->parsed()) {
      prunix::PipelineConfig cfg = load_cfg(quant_c);
      if (bits > 0) {
        cfg.quant_bits = bits;
        cfg.quant_clamp = -1;
      }
      prunix::cmd_quantize(cfg, quant_ckpt);
    } else if (ft->parsed()) {
      prunix::cmd_finetune(load_cfg(ft_c), ft_ckpt);
    } else if (inject->parsed()) {
      prunix::cmd_inject(load_cfg(inject_c), inject_ckpt, ia);
    } else if (eval->parsed()) {
      prunix::cmd_eval(load_cfg(eval_c), eval_ckpt, faults, crossbar);
    } else if (sweep->parsed()) {
      prunix::cmd_sweep(load_cfg(sweep_c), sweep_ckpt, axis, grid, reps);
    } else if (report->parsed()) {
      prunix::cmd_report(report_dir);
    }
  } catch (const prunix::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const prunix::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const prunix::NumericsError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
