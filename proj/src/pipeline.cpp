#include "prunix/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "prunix/checkpoint.hpp"
#include "prunix/errors.hpp"
#include "prunix/kernels.hpp"
#include "prunix/nn.hpp"
#include "prunix/rng.hpp"

namespace prunix {

namespace fs = std::filesystem;

PipelineConfig PipelineConfig::from_config(const Config& c) {
  PipelineConfig p;
  p.dataset_path = c.str("dataset.path", "");
  p.dataset_format = parse_data_format(c.str("dataset.format", "csv"));
  p.split_train = c.num("dataset.split_train", p.split_train);
  p.split_val = c.num("dataset.split_val", p.split_val);
  p.split_test = c.num("dataset.split_test", p.split_test);
  p.num_classes = c.integer("dataset.classes", p.num_classes);
  p.arch = c.str("model.arch", p.arch);

  p.epochs_initial = c.integer("train.epochs_initial", p.epochs_initial);
  p.epochs_regularized =
      c.integer("train.epochs_regularized", p.epochs_regularized);
  p.epochs_finetune = c.integer("train.epochs_finetune", p.epochs_finetune);
  p.lr = static_cast<float>(c.num("train.lr", p.lr));
  p.lr_decay = static_cast<float>(c.num("train.lr_decay", p.lr_decay));
  p.batch_size = c.integer("train.batch", p.batch_size);

  p.quant_bits = c.integer("quant.bits", p.quant_bits);
  if (p.quant_bits < 2 || p.quant_bits > 8)
    throw ConfigError("quant.bits must be in [2,8]");
  p.quant_clamp = c.integer("quant.clamp_levels", -1);

  p.reg.kind = parse_reg_kind(c.str("regularizer.kind", "group_sawtooth"));
  p.reg.saw.lambda_s =
      static_cast<float>(c.num("regularizer.lambda_s", p.reg.saw.lambda_s));
  p.reg.saw.decay =
      static_cast<float>(c.num("regularizer.decay", p.reg.saw.decay));
  p.reg.saw.clamp_levels = c.integer("regularizer.clamp_levels",
                                     full_scale_levels(p.quant_bits));
  p.reg.lambda_reg =
      static_cast<float>(c.num("regularizer.lambda_reg", p.reg.lambda_reg));
  p.reg.group_gamma =
      parse_group_gamma(c.str("regularizer.group_gamma", "group_norm"));
  p.reg.group_fc = c.flag("regularizer.group_fc", true);

  p.prune.lambda_p =
      static_cast<float>(c.num("prune.lambda_p", p.prune.lambda_p));
  p.prune.mu = static_cast<float>(c.num("prune.mu", p.prune.mu));
  p.prune.sigma = static_cast<float>(c.num("prune.sigma", p.prune.sigma));
  p.prune.gamma = static_cast<float>(c.num("prune.gamma", p.prune.gamma));
  p.prune.lambda_min =
      static_cast<float>(c.num("prune.lambda_min", p.prune.lambda_min));
  p.prune.reset_lambda = c.flag("prune.reset_lambda", true);
  p.prune_global = c.flag("prune.global", false);
  p.global_rate = static_cast<float>(c.num("prune.global_rate", -1.0));

  p.drift_fraction = c.num("inject.drift_fraction", p.drift_fraction);
  p.aging_fraction = c.num("inject.aging_fraction", p.aging_fraction);
  p.aging_levels = c.integer("inject.aging_levels", p.aging_levels);
  p.sweep_reps = c.integer("sweep.reps", p.sweep_reps);

  p.seed = static_cast<std::uint64_t>(c.num("seed", 1));
  p.out_dir = c.str("out", p.out_dir);
  p.stages = c.str("pipeline.stages", p.stages);

  if (std::fabs(p.split_train + p.split_val + p.split_test - 1.0) > 1e-9)
    throw ConfigError("dataset split fractions must sum to 1");
  if (!(p.lr > 0.0f)) throw ConfigError("train.lr must be positive");
  if (p.batch_size < 1) throw ConfigError("train.batch must be positive");
  if (p.prune.lambda_p <= 0.0f || p.prune.lambda_p > 1.0f)
    throw ConfigError("prune.lambda_p must be in (0,1]");
  if (p.prune.mu < 0.0f || p.prune.mu > 1.0f)
    throw ConfigError("prune.mu must be in [0,1]");
  if (p.prune.gamma <= 0.0f || p.prune.gamma >= 1.0f)
    throw ConfigError("prune.gamma must be in (0,1)");
  return p;
}

QuantScheme PipelineConfig::scheme() const {
  return make_scheme(quant_bits, quant_clamp);
}

Dataset load_pipeline_dataset(const PipelineConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("dataset.path is required");
  return load_dataset(cfg.dataset_path, cfg.dataset_format, cfg.num_classes);
}

Split make_split(const PipelineConfig& cfg, std::size_t n) {
  return split_dataset(n, cfg.split_train, cfg.split_val, cfg.split_test,
                       cfg.seed);
}

namespace {

std::vector<std::vector<float>> save_params(const Model& m) {
  std::vector<std::vector<float>> saved;
  for (const Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    saved.push_back(l.weight.data);
    saved.push_back(l.bias.data);
  }
  return saved;
}

void restore_params(Model& m, const std::vector<std::vector<float>>& saved) {
  std::size_t i = 0;
  for (Layer& l : m.layers) {
    if (!l.spec.has_params()) continue;
    l.weight.data = saved[i++];
    l.bias.data = saved[i++];
  }
}

// Snap every weight and bias onto its layer's level grid.
void snap_to_levels(Model& m, const std::vector<float>& scales, int clamp) {
  const std::size_t np = m.param_layer_count();
  for (std::size_t pi = 0; pi < np; ++pi) {
    Layer& l = m.param_layer(pi);
    const float p = scales.at(pi);
    for (float& w : l.weight.data)
      w = static_cast<float>(quantize_level(w, p, clamp)) * p;
    for (float& b : l.bias.data)
      b = static_cast<float>(quantize_level(b, p, clamp)) * p;
  }
}

bool sawtooth_kind(RegKind k) {
  return k == RegKind::GroupSawtooth || k == RegKind::Sawtooth;
}

struct TrainLoopOpts {
  const char* stage = "";
  int epochs = 0;
  bool with_reg = false;
  bool relax = false;
  bool ste = false;
};

void train_epochs(PipelineState& st, const PipelineConfig& cfg,
                  const Dataset& ds, const Split& split,
                  const TrainLoopOpts& o, MetricsWriter* mw) {
  if (split.train.empty()) throw DataError("training split is empty");
  Model& model = st.model;
  const int clamp = cfg.scheme().clamp_levels;

  for (int e = 0; e < o.epochs; ++e) {
    double lambda_now = 0.0;
    if (o.with_reg && sawtooth_kind(cfg.reg.kind))
      lambda_now = o.relax
                       ? relax_lambda(cfg.reg.saw.lambda_s, cfg.reg.saw.decay, e)
                       : cfg.reg.saw.lambda_s;

    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng(
        derive_seed(cfg.seed, std::string("shuffle:") + o.stage, e));
    shuffle_rng.shuffle(order);

    const float lr_e =
        cfg.lr * std::pow(cfg.lr_decay, static_cast<float>(e));

    double ce_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size();
         b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bn =
          std::min<std::size_t>(cfg.batch_size, order.size() - b);

      std::vector<std::vector<float>> shadow;
      if (o.ste) {
        shadow = save_params(model);
        snap_to_levels(model, st.scales, clamp);
      }
      for (std::size_t i = 0; i < bn; ++i) {
        const std::size_t idx = order[b + i];
        ForwardTrace trace;
        const Tensor logits = forward(model, ds.image(idx), &trace);
        Tensor dlogits;
        ce_sum += nn::softmax_cross_entropy(
            logits, static_cast<std::size_t>(ds.label(idx)), &dlogits);
        backward(model, trace, dlogits);
        ++seen;
      }
      const float inv = 1.0f / static_cast<float>(bn);
      for (Layer& l : model.layers) {
        if (!l.spec.has_params()) continue;
        kern::scale(l.weight.grad.data(), inv, l.weight.grad.size());
        kern::scale(l.bias.grad.data(), inv, l.bias.grad.size());
      }
      if (o.ste) restore_params(model, shadow);
      if (o.with_reg)
        add_regularizer_gradient(model, cfg.reg, st.scales, lambda_now);
      mask_gradients(model, st.mask);
      for (Layer& l : model.layers) {
        if (!l.spec.has_params()) continue;
        nn::sgd_step(l.weight, lr_e);
        nn::sgd_step(l.bias, lr_e);
      }
      apply_mask(model, st.mask);
    }

    if (o.ste) {
      snap_to_levels(model, st.scales, clamp);
      apply_mask(model, st.mask);
    }

    const double mean_ce = ce_sum / static_cast<double>(seen);
    if (!std::isfinite(mean_ce))
      throw NumericsError("training loss is not finite");

    if (mw != nullptr) {
      MetricsRecord rec;
      rec.stage = o.stage;
      rec.epoch = e;
      double penalty = 0.0;
      if (o.with_reg)
        penalty = regularizer_penalty(model, cfg.reg, st.scales, lambda_now);
      rec.train_loss = mean_ce + penalty;
      if (!split.val.empty())
        rec.val_acc = evaluate_accuracy(model, ds, split.val);
      if (!split.test.empty())
        rec.test_acc = evaluate_accuracy(model, ds, split.test);
      rec.sparsity_pct = measure_sparsity(model).overall_element_pct;
      if (o.with_reg && sawtooth_kind(cfg.reg.kind)) rec.lambda_s = lambda_now;
      if (!st.scales.empty()) {
        rec.mean_gamma =
            mean_weight_sawtooth(model, st.scales, cfg.reg.saw.clamp_levels);
        rec.level_mass = level_mass(model, st.scales, 0.1);
      }
      mw->append(rec);
    }
  }
}

std::string stage_ckpt_path(const PipelineConfig& cfg,
                            const std::string& stage) {
  return cfg.out_dir + "/ckpt_" + stage + ".ckpt";
}

}  // namespace

void stage_initial_train(PipelineState& st, const PipelineConfig& cfg,
                         const Dataset& ds, const Split& split,
                         MetricsWriter* mw) {
  TrainLoopOpts o;
  o.stage = "initial";
  o.epochs = cfg.epochs_initial;
  train_epochs(st, cfg, ds, split, o, mw);
  write_weight_histogram(cfg.out_dir + "/hist_initial.csv", st.model);
}

void stage_regularized_train(PipelineState& st, const PipelineConfig& cfg,
                             const Dataset& ds, const Split& split,
                             MetricsWriter* mw) {
  // Calibrate and freeze the per-layer level periods; the sawtooth minima
  // trained here must coincide with the final quantization grid.
  const std::size_t np = st.model.param_layer_count();
  st.scales.assign(np, 0.0f);
  for (std::size_t pi = 0; pi < np; ++pi)
    st.scales[pi] =
        calibrate_scale(st.model.param_layer(pi).weight, cfg.quant_bits);

  TrainLoopOpts o;
  o.stage = "regularized";
  o.epochs = cfg.epochs_regularized;
  o.with_reg = cfg.reg.kind != RegKind::None;
  train_epochs(st, cfg, ds, split, o, mw);
  write_weight_histogram(cfg.out_dir + "/hist_regularized.csv", st.model);
}

ApaResult stage_prune_quantize(PipelineState& st, const PipelineConfig& cfg,
                               const Dataset& ds, const Split& split,
                               MetricsWriter* mw) {
  ApaResult res;
  if (cfg.prune_global) {
    const float rate =
        cfg.global_rate >= 0.0f ? cfg.global_rate : cfg.prune.lambda_p;
    if (!split.val.empty())
      res.baseline_accuracy = evaluate_accuracy(st.model, ds, split.val);
    global_prune(st.model, st.mask, rate, cfg.prune.mu);
    res.report = measure_sparsity(st.model);
  } else {
    if (split.val.empty())
      throw ConfigError("adaptive pruning requires a validation split");
    res = adaptive_prune(st.model, st.mask, cfg.prune,
                         [&](const Model& m) {
                           return evaluate_accuracy(m, ds, split.val);
                         });
  }

  if (st.scales.size() != st.model.param_layer_count())
    st.scales.assign(st.model.param_layer_count(), 0.0f);
  QuantScheme scheme = cfg.scheme();
  scheme.per_layer_scale = st.scales;
  quantize_model_inplace(st.model, scheme);
  st.scales = scheme.per_layer_scale;
  apply_mask(st.model, st.mask);
  st.quantized = true;

  write_sparsity_report(cfg.out_dir, res.report);
  write_weight_histogram(cfg.out_dir + "/hist_prune_quantize.csv", st.model);

  if (mw != nullptr) {
    for (const ApaStep& s : res.steps) {
      MetricsRecord rec;
      rec.stage = "apa_step";
      rec.params = {{"layer", static_cast<double>(s.param_layer)},
                    {"accepted", s.accepted ? 1.0 : 0.0},
                    {"rate", s.rate},
                    {"acc_loss", s.acc_loss},
                    {"attempts", static_cast<double>(s.attempts)}};
      mw->append(rec);
    }
    MetricsRecord rec;
    rec.stage = "prune_quantize";
    rec.sparsity_pct = res.report.overall_element_pct;
    if (!split.val.empty())
      rec.val_acc = evaluate_accuracy(st.model, ds, split.val);
    if (!split.test.empty())
      rec.test_acc = evaluate_accuracy(st.model, ds, split.test);
    if (!st.scales.empty()) {
      rec.mean_gamma =
          mean_weight_sawtooth(st.model, st.scales, cfg.reg.saw.clamp_levels);
      rec.level_mass = level_mass(st.model, st.scales, 0.1);
    }
    mw->append(rec);
  }
  return res;
}

void stage_fine_tune(PipelineState& st, const PipelineConfig& cfg,
                     const Dataset& ds, const Split& split,
                     MetricsWriter* mw) {
  if (!st.quantized)
    throw ConfigError("fine-tuning requires a quantized model");
  TrainLoopOpts o;
  o.stage = "fine_tune";
  o.epochs = cfg.epochs_finetune;
  o.with_reg = cfg.reg.kind != RegKind::None;
  o.relax = true;
  o.ste = true;
  train_epochs(st, cfg, ds, split, o, mw);
  write_weight_histogram(cfg.out_dir + "/hist_fine_tune.csv", st.model);
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "bits") return SweepAxis::bits;
  if (name == "drift_r") return SweepAxis::drift_r;
  if (name == "stuck_fraction") return SweepAxis::stuck_fraction;
  if (name == "aging") return SweepAxis::aging;
  throw ConfigError("unknown sweep axis: " + name);
}

namespace {

const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::bits:
      return "bits";
    case SweepAxis::drift_r:
      return "drift_r";
    case SweepAxis::stuck_fraction:
      return "stuck_fraction";
    case SweepAxis::aging:
      return "aging";
  }
  return "?";
}

// Quantized copy of the state's model plus the matching scheme. Frozen
// scales are reused when present; otherwise calibration fills them.
std::pair<Model, QuantScheme> quantized_view(const PipelineState& st,
                                             const PipelineConfig& cfg) {
  Model copy = st.model;
  QuantScheme scheme = cfg.scheme();
  scheme.per_layer_scale = st.scales;
  quantize_model_inplace(copy, scheme);
  return {std::move(copy), std::move(scheme)};
}

}  // namespace

std::vector<SweepPoint> run_sweep(const PipelineState& st,
                                  const PipelineConfig& cfg, const Dataset& ds,
                                  const Split& split, SweepAxis axis,
                                  const std::vector<double>& grid, int reps,
                                  MetricsWriter* mw) {
  if (split.test.empty()) throw DataError("sweep requires a test split");
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (reps < 1) throw ConfigError("sweep reps must be >= 1");

  std::vector<SweepPoint> points;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double value = grid[gi];
    SweepPoint pt;
    pt.value = value;

    if (axis == SweepAxis::bits) {
      const int bits = static_cast<int>(value);
      if (static_cast<double>(bits) != value || bits < 2 || bits > 8)
        throw ConfigError("bits sweep values must be integers in [2,8]");
      Model copy = st.model;
      QuantScheme scheme = make_scheme(bits);  // fresh calibration per width
      quantize_model_inplace(copy, scheme);
      const auto pairs = map_model(copy, scheme);
      pt.rep_acc.push_back(
          evaluate_on_crossbar(pairs, copy, ds, split.test));
    } else {
      auto [qmodel, scheme] = quantized_view(st, cfg);
      const auto base_pairs = map_model(qmodel, scheme);
      for (int rep = 0; rep < reps; ++rep) {
        auto pairs = base_pairs;
        const std::uint64_t seed = derive_seed(
            cfg.seed, std::string("sweep:") + axis_name(axis),
            gi * 1000003ull + static_cast<std::uint64_t>(rep));
        switch (axis) {
          case SweepAxis::drift_r:
            inject_drift(pairs,
                         {static_cast<float>(value),
                          static_cast<float>(cfg.drift_fraction)},
                         seed);
            break;
          case SweepAxis::stuck_fraction:
            inject_stuck_off(pairs, value, seed);
            break;
          case SweepAxis::aging:
            inject_aging(pairs,
                         {static_cast<float>(cfg.aging_fraction),
                          static_cast<int>(value)},
                         seed);
            break;
          default:
            break;
        }
        pt.rep_acc.push_back(
            evaluate_on_crossbar(pairs, qmodel, ds, split.test));
      }
    }

    double mean = 0.0;
    for (const double a : pt.rep_acc) mean += a;
    mean /= static_cast<double>(pt.rep_acc.size());
    double var = 0.0;
    for (const double a : pt.rep_acc) var += (a - mean) * (a - mean);
    pt.mean_acc = mean;
    pt.std_acc = pt.rep_acc.size() > 1
                     ? std::sqrt(var / static_cast<double>(pt.rep_acc.size() - 1))
                     : 0.0;

    if (mw != nullptr) {
      for (std::size_t rep = 0; rep < pt.rep_acc.size(); ++rep) {
        MetricsRecord rec;
        rec.stage = "sweep";
        rec.test_acc = pt.rep_acc[rep];
        rec.params = {{axis_name(axis), value},
                      {"rep", static_cast<double>(rep)}};
        mw->append(rec);
      }
      MetricsRecord rec;
      rec.stage = "sweep_summary";
      rec.test_acc = pt.mean_acc;
      rec.params = {{axis_name(axis), value},
                    {"std", pt.std_acc},
                    {"reps", static_cast<double>(pt.rep_acc.size())}};
      mw->append(rec);
    }
    points.push_back(std::move(pt));
  }
  return points;
}

std::string resolve_checkpoint(const PipelineConfig& cfg,
                               const std::string& explicit_path) {
  if (!explicit_path.empty()) {
    if (!fs::exists(explicit_path))
      throw ConfigError("checkpoint not found: " + explicit_path);
    return explicit_path;
  }
  for (const char* stage :
       {"finetuned", "quantized", "pruned", "regularized", "initial"}) {
    const std::string path = stage_ckpt_path(cfg, stage);
    if (fs::exists(path)) return path;
  }
  throw ConfigError("no checkpoint found under " + cfg.out_dir);
}

PipelineState load_state(const PipelineConfig& cfg, const std::string& path) {
  (void)cfg;
  Checkpoint ck = load_checkpoint(path);
  PipelineState st;
  st.model = std::move(ck.model);
  st.scales = std::move(ck.scales);
  if (ck.has_mask)
    st.mask = std::move(ck.mask);
  else
    st.mask = PruneMask::for_model(st.model);
  st.quantized = ck.meta.count("quantized") && ck.meta.at("quantized") == "1";
  return st;
}

void save_state(const PipelineConfig& cfg, const PipelineState& st,
                const std::string& stage) {
  fs::create_directories(cfg.out_dir);
  std::map<std::string, std::string> meta;
  meta["arch"] = cfg.arch;
  meta["stage"] = stage;
  meta["seed"] = std::to_string(cfg.seed);
  meta["quantized"] = st.quantized ? "1" : "0";
  if (st.quantized) {
    meta["quant_bits"] = std::to_string(cfg.quant_bits);
    meta["quant_clamp"] = std::to_string(cfg.scheme().clamp_levels);
  }
  const PruneMask* mask = st.mask.empty_mask() ? nullptr : &st.mask;
  save_checkpoint(stage_ckpt_path(cfg, stage), st.model, meta, st.scales,
                  mask);
}

void cmd_train(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  PipelineState st;
  st.model = make_model(cfg.arch, static_cast<std::size_t>(cfg.num_classes),
                        {ds.channels, ds.height, ds.width});
  init_params(st.model, cfg.seed);
  st.mask = PruneMask::for_model(st.model);

  std::stringstream ss(cfg.stages);
  std::string stage;
  while (std::getline(ss, stage, ',')) {
    if (stage == "initial") {
      stage_initial_train(st, cfg, ds, split, &mw);
      save_state(cfg, st, "initial");
    } else if (stage == "regularized") {
      stage_regularized_train(st, cfg, ds, split, &mw);
      save_state(cfg, st, "regularized");
    } else if (stage == "prune_quantize") {
      stage_prune_quantize(st, cfg, ds, split, &mw);
      save_state(cfg, st, "quantized");
    } else if (stage == "fine_tune") {
      stage_fine_tune(st, cfg, ds, split, &mw);
      save_state(cfg, st, "finetuned");
    } else {
      throw ConfigError("unknown pipeline stage: " + stage);
    }
  }
}

void cmd_prune(const PipelineConfig& cfg, const std::string& ckpt_in) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  std::string path = ckpt_in;
  if (path.empty()) {
    for (const char* stage : {"regularized", "initial"}) {
      const std::string candidate = stage_ckpt_path(cfg, stage);
      if (fs::exists(candidate)) {
        path = candidate;
        break;
      }
    }
    if (path.empty())
      throw ConfigError("prune: no trained checkpoint under " + cfg.out_dir);
  }
  PipelineState st = load_state(cfg, path);

  ApaResult res;
  if (cfg.prune_global) {
    const float rate =
        cfg.global_rate >= 0.0f ? cfg.global_rate : cfg.prune.lambda_p;
    global_prune(st.model, st.mask, rate, cfg.prune.mu);
    res.report = measure_sparsity(st.model);
  } else {
    if (split.val.empty())
      throw ConfigError("adaptive pruning requires a validation split");
    res = adaptive_prune(st.model, st.mask, cfg.prune,
                         [&](const Model& m) {
                           return evaluate_accuracy(m, ds, split.val);
                         });
    for (const ApaStep& s : res.steps) {
      MetricsRecord rec;
      rec.stage = "apa_step";
      rec.params = {{"layer", static_cast<double>(s.param_layer)},
                    {"accepted", s.accepted ? 1.0 : 0.0},
                    {"rate", s.rate},
                    {"acc_loss", s.acc_loss},
                    {"attempts", static_cast<double>(s.attempts)}};
      mw.append(rec);
    }
  }
  write_sparsity_report(cfg.out_dir, res.report);

  MetricsRecord rec;
  rec.stage = "prune";
  rec.sparsity_pct = res.report.overall_element_pct;
  if (!split.val.empty())
    rec.val_acc = evaluate_accuracy(st.model, ds, split.val);
  if (!split.test.empty())
    rec.test_acc = evaluate_accuracy(st.model, ds, split.test);
  mw.append(rec);

  save_state(cfg, st, "pruned");
}

void cmd_quantize(const PipelineConfig& cfg, const std::string& ckpt_in) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  std::string path = ckpt_in;
  if (path.empty()) {
    for (const char* stage : {"pruned", "regularized", "initial"}) {
      const std::string candidate = stage_ckpt_path(cfg, stage);
      if (fs::exists(candidate)) {
        path = candidate;
        break;
      }
    }
    if (path.empty())
      throw ConfigError("quantize: no checkpoint under " + cfg.out_dir);
  }
  PipelineState st = load_state(cfg, path);

  if (st.scales.size() != st.model.param_layer_count())
    st.scales.assign(st.model.param_layer_count(), 0.0f);
  QuantScheme scheme = cfg.scheme();
  scheme.per_layer_scale = st.scales;
  quantize_model_inplace(st.model, scheme);
  st.scales = scheme.per_layer_scale;
  apply_mask(st.model, st.mask);
  st.quantized = true;

  MetricsRecord rec;
  rec.stage = "quantize";
  rec.sparsity_pct = measure_sparsity(st.model).overall_element_pct;
  if (!split.val.empty())
    rec.val_acc = evaluate_accuracy(st.model, ds, split.val);
  if (!split.test.empty())
    rec.test_acc = evaluate_accuracy(st.model, ds, split.test);
  rec.params = {{"bits", static_cast<double>(cfg.quant_bits)},
                {"clamp", static_cast<double>(scheme.clamp_levels)}};
  mw.append(rec);

  save_state(cfg, st, "quantized");
}

void cmd_finetune(const PipelineConfig& cfg, const std::string& ckpt_in) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  std::string path = ckpt_in;
  if (path.empty()) {
    const std::string candidate = stage_ckpt_path(cfg, "quantized");
    if (!fs::exists(candidate))
      throw ConfigError("finetune: no quantized checkpoint under " +
                        cfg.out_dir);
    path = candidate;
  }
  PipelineState st = load_state(cfg, path);
  if (!st.quantized)
    throw ConfigError("finetune requires a quantized checkpoint");

  stage_fine_tune(st, cfg, ds, split, &mw);
  save_state(cfg, st, "finetuned");
}

void cmd_inject(const PipelineConfig& cfg, const std::string& ckpt_in,
                const InjectArgs& args) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  PipelineState st = load_state(cfg, resolve_checkpoint(cfg, ckpt_in));
  if (!st.quantized)
    throw ConfigError("inject requires a quantized checkpoint");

  auto [qmodel, scheme] = quantized_view(st, cfg);
  auto pairs = map_model(qmodel, scheme);
  const double healthy = split.test.empty()
                             ? MetricsRecord::kUnset
                             : evaluate_on_crossbar(pairs, qmodel, ds,
                                                    split.test);

  const double drift_fraction =
      args.drift_fraction >= 0.0 ? args.drift_fraction : cfg.drift_fraction;
  const double aging_fraction = args.aging_fraction >= 0.0
                                    ? args.aging_fraction
                                    : 0.0;  // aging only when requested
  const int aging_levels =
      args.aging_levels >= 0 ? args.aging_levels : cfg.aging_levels;

  std::vector<FaultRecord> records;
  if (args.stuck_off > 0.0) {
    auto r = inject_stuck_off(pairs, args.stuck_off, cfg.seed);
    records.insert(records.end(), r.begin(), r.end());
  }
  if (args.drift_r > 0.0 && drift_fraction > 0.0) {
    auto r = inject_drift(pairs,
                          {static_cast<float>(args.drift_r),
                           static_cast<float>(drift_fraction)},
                          cfg.seed);
    records.insert(records.end(), r.begin(), r.end());
  }
  if (aging_levels > 0 && aging_fraction > 0.0) {
    auto r = inject_aging(pairs,
                          {static_cast<float>(aging_fraction), aging_levels},
                          cfg.seed);
    records.insert(records.end(), r.begin(), r.end());
  }

  const std::vector<std::pair<std::string, double>> params = {
      {"stuck_off", args.stuck_off},
      {"drift_r", args.drift_r},
      {"drift_fraction", drift_fraction},
      {"aging_fraction", aging_fraction},
      {"aging_levels", static_cast<double>(aging_levels)},
      {"seed", static_cast<double>(cfg.seed)}};
  write_fault_records(cfg.out_dir + "/faults.json", records, params);

  MetricsRecord rec;
  rec.stage = "inject";
  if (MetricsRecord::is_set(healthy)) rec.val_acc = healthy;  // healthy ref
  if (!split.test.empty())
    rec.test_acc = evaluate_on_crossbar(pairs, qmodel, ds, split.test);
  rec.params = params;
  mw.append(rec);
}

void cmd_eval(const PipelineConfig& cfg, const std::string& ckpt_in,
              const std::string& faults_path, bool on_crossbar) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  PipelineState st = load_state(cfg, resolve_checkpoint(cfg, ckpt_in));

  MetricsRecord rec;
  rec.stage = "eval";
  if (!faults_path.empty() || on_crossbar) {
    if (!st.quantized)
      throw ConfigError("crossbar evaluation requires a quantized checkpoint");
    auto [qmodel, scheme] = quantized_view(st, cfg);
    auto pairs = map_model(qmodel, scheme);
    if (!faults_path.empty())
      apply_fault_records(pairs, read_fault_records(faults_path));
    if (!split.val.empty())
      rec.val_acc = evaluate_on_crossbar(pairs, qmodel, ds, split.val);
    if (!split.test.empty())
      rec.test_acc = evaluate_on_crossbar(pairs, qmodel, ds, split.test);
    rec.params = {{"crossbar", 1.0},
                  {"faults", faults_path.empty() ? 0.0 : 1.0}};
  } else {
    if (!split.val.empty())
      rec.val_acc = evaluate_accuracy(st.model, ds, split.val);
    if (!split.test.empty())
      rec.test_acc = evaluate_accuracy(st.model, ds, split.test);
  }
  rec.sparsity_pct = measure_sparsity(st.model).overall_element_pct;
  mw.append(rec);
}

void cmd_sweep(const PipelineConfig& cfg, const std::string& ckpt_in,
               const std::string& axis_name_in,
               const std::vector<double>& grid_in, int reps) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const Split split = make_split(cfg, ds.size());
  MetricsWriter mw(cfg.out_dir);

  PipelineState st = load_state(cfg, resolve_checkpoint(cfg, ckpt_in));
  const SweepAxis axis = parse_sweep_axis(axis_name_in);

  std::vector<double> grid = grid_in;
  if (grid.empty()) {
    switch (axis) {
      case SweepAxis::bits:
        grid = {2, 3, 4, 6, 8};
        break;
      case SweepAxis::drift_r:
        grid = {0.0, 0.25, 0.5, 0.75, 1.0};
        break;
      case SweepAxis::stuck_fraction:
        grid = {0.0, 0.05, 0.1, 0.2, 0.3};
        break;
      case SweepAxis::aging:
        grid = {0, 2, 4, 8};
        break;
    }
  }
  run_sweep(st, cfg, ds, split, axis, grid,
            reps > 0 ? reps : cfg.sweep_reps, &mw);
}

void cmd_report(const std::string& out_dir) {
  const std::string path = out_dir + "/metrics.jsonl";
  std::ifstream in(path);
  if (!in) throw DataError("no metrics found at " + path);

  // axis -> value -> accs
  std::map<std::string, std::map<double, std::vector<double>>> sweeps;
  std::string last_stage_line;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(std::string("malformed metrics line: ") + e.what());
    }
    const std::string stage = j.value("stage", "");
    if (stage == "sweep" && j.contains("params")) {
      const auto& p = j["params"];
      for (const char* axis :
           {"bits", "drift_r", "stuck_fraction", "aging"}) {
        if (p.contains(axis) && j.contains("test_acc") &&
            !j["test_acc"].is_null())
          sweeps[axis][p[axis].get<double>()].push_back(
              j["test_acc"].get<double>());
      }
    }
  }

  std::ofstream csv(out_dir + "/report.csv");
  csv << "axis,value,mean_acc,std_acc,reps\n";
  std::printf("axis,value,mean_acc,std_acc,reps\n");
  for (const auto& [axis, byval] : sweeps) {
    for (const auto& [value, accs] : byval) {
      double mean = 0.0;
      for (const double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (const double a : accs) var += (a - mean) * (a - mean);
      const double sd =
          accs.size() > 1
              ? std::sqrt(var / static_cast<double>(accs.size() - 1))
              : 0.0;
      csv << axis << ',' << format_number(value) << ',' << format_number(mean)
          << ',' << format_number(sd) << ',' << accs.size() << '\n';
      std::printf("%s,%s,%s,%s,%zu\n", axis.c_str(),
                  format_number(value).c_str(), format_number(mean).c_str(),
                  format_number(sd).c_str(), accs.size());
    }
  }
}

}  // namespace prunix
