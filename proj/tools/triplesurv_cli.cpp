// triplesurv command-line entry point.
//
// Option precedence (lowest to highest): built-in defaults, --config file,
// dedicated flags (--data, --time-col, --event-col, --out, --seed),
// --set key=value overrides in the order given.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "triplesurv/triplesurv.hpp"

namespace {

using namespace triplesurv;

struct CommonFlags {
  std::string config;
  std::string data;
  std::string time_col;
  std::string event_col;
  std::string out;
  std::optional<long long> seed;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value configuration file");
    app->add_option("--data", data, "input CSV");
    app->add_option("--time-col", time_col, "name of the time column");
    app->add_option("--event-col", event_col, "name of the event column (1 = event, 0 = censored)");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--set", overrides, "override a config key (key=value), repeatable");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
    if (!data.empty()) cfg.set("data", data);
    if (!time_col.empty()) cfg.set("time_col", time_col);
    if (!event_col.empty()) cfg.set("event_col", event_col);
    if (!out.empty()) cfg.set("out", out);
    if (seed) cfg.set("seed", std::to_string(*seed));
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
  }
};

void print_report(const EvalReport& r) {
  std::printf("c_index  %.4f\nibs      %.4f\nm_tdauc  %.4f\nhr       %.4f%s\ncutoff   %.6f\n", r.c_index, r.ibs,
              r.m_tdauc, r.hr, r.hr_degenerate ? " (degenerate)" : "", r.cutoff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-time survival models trained with the TripleSurv loss"};
  app.require_subcommand(1);

  CommonFlags prepare_flags, train_flags, ablate_flags;
  auto* prepare = app.add_subcommand("prepare", "split a CSV into train/val/test and write the training time grid");
  prepare_flags.attach(prepare);

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint, history, config echo and grid");
  train_flags.attach(train);

  EvaluateOptions eval_opt;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a test CSV");
  evaluate->add_option("--checkpoint", eval_opt.checkpoint, "checkpoint file from `train`")->required();
  evaluate->add_option("--data,--test", eval_opt.test_csv, "test CSV")->required();
  evaluate->add_option("--grid", eval_opt.grid_file, "grid file from `train`")->required();
  evaluate->add_option("--out", eval_opt.out, "output directory");
  evaluate->add_option("--time-col", eval_opt.time_col, "time column (default: as in training)");
  evaluate->add_option("--event-col", eval_opt.event_col, "event column (default: as in training)");
  evaluate->add_option("--name", eval_opt.model_name, "model name written in the report");

  auto* ablate = app.add_subcommand("ablate", "train the six loss-component combinations and tabulate test metrics");
  ablate_flags.attach(ablate);

  SynthConfig synth_cfg;
  std::string synth_out = "out";
  std::string risk_model = "linear", baseline = "weibull";
  auto* synth = app.add_subcommand("synth", "generate a synthetic right-censored dataset");
  synth->add_option("--out", synth_out, "output directory (writes synth.csv and synth.csv.oracle.csv)");
  synth->add_option("--seed", synth_cfg.seed, "random seed");
  synth->add_option("--n", synth_cfg.n_samples, "number of samples");
  synth->add_option("--features", synth_cfg.n_features, "number of covariates");
  synth->add_option("--censor-rate", synth_cfg.target_censor_rate, "target censoring fraction in [0, 1)");
  synth->add_option("--risk-model", risk_model, "linear | quadratic");
  synth->add_option("--baseline", baseline, "exponential | weibull");
  synth->add_option("--weibull-shape", synth_cfg.weibull_shape, "Weibull shape parameter");
  synth->add_option("--risk-scale", synth_cfg.risk_scale, "standard deviation of the linear risk");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*prepare) {
      const auto cfg = prepare_flags.resolve();
      const auto d = cmd_prepare(cfg);
      std::printf("train %zu / val %zu / test %zu samples -> %s\n", d.train.size(), d.validation.size(),
                  d.test ? d.test->size() : 0, cfg.out.c_str());
    } else if (*train) {
      const auto cfg = train_flags.resolve();
      const auto o = cmd_train(cfg);
      std::printf("best validation c-index %.4f at epoch %d -> %s\n", o.fit.best_c_index, o.fit.best_epoch,
                  cfg.out.c_str());
    } else if (*evaluate) {
      print_report(cmd_evaluate(eval_opt));
    } else if (*ablate) {
      const auto cfg = ablate_flags.resolve();
      for (const auto& r : cmd_ablate(cfg, default_ablation_grid())) {
        std::printf("%-20s c_index %.4f  ibs %.4f  m_tdauc %.4f\n", r.row.label().c_str(), r.report.c_index,
                    r.report.ibs, r.report.m_tdauc);
      }
    } else if (*synth) {
      if (risk_model == "linear") synth_cfg.risk_model = RiskModel::Linear;
      else if (risk_model == "quadratic") synth_cfg.risk_model = RiskModel::Quadratic;
      else throw ConfigError("unknown risk model '" + risk_model + "'");
      if (baseline == "exponential") synth_cfg.baseline = BaselineKind::Exponential;
      else if (baseline == "weibull") synth_cfg.baseline = BaselineKind::Weibull;
      else throw ConfigError("unknown baseline '" + baseline + "'");
      const auto d = cmd_synth(synth_cfg, synth_out);
      std::printf("%zu samples, censoring %.3f -> %s/synth.csv\n", d.dataset.size(), d.censor_rate, synth_out.c_str());
    }
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
