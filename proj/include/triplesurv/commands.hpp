#pragma once

// The pipeline behind the command-line subcommands: prepare, train,
// evaluate, ablate, synth. Each cmd_* function writes its artifacts into a
// directory and returns the in-memory results so tests can inspect both.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "triplesurv/checkpoint.hpp"
#include "triplesurv/config.hpp"
#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/losses.hpp"
#include "triplesurv/metrics.hpp"
#include "triplesurv/model.hpp"
#include "triplesurv/report.hpp"
#include "triplesurv/synth.hpp"
#include "triplesurv/training.hpp"

namespace triplesurv {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFile = "checkpoint.txt";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kConfigEchoFile = "config.txt";
inline constexpr const char* kGridFile = "grid.txt";

// Everything needed to score new data the way the training data was scored:
// the training TimeGrid, the feature statistics, and the risk cutoff picked
// on the training set for hazard-ratio stratification.
struct Preprocessing {
  TimeGrid grid;
  std::vector<std::string> feature_names;
  Standardizer standardizer;
  std::string time_col = "time";
  std::string event_col = "event";
  double risk_cutoff = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + format_real(v[i]);
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::istringstream in(s);
  for (std::string part; std::getline(in, part, ';');) out.push_back(part);
  return out;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace detail

inline void write_preprocessing(std::ostream& out, const Preprocessing& p) {
  const auto& g = p.grid;
  out << "# training time grid and feature statistics\n"
      << "k_bins = " << g.k_bins << '\n'
      << "t_min = " << format_real(g.t_min) << '\n'
      << "t_max = " << format_real(g.t_max) << '\n'
      << "delta_t = " << format_real(g.delta_t) << '\n'
      << "t_min_prime = " << format_real(g.t_min_prime) << '\n'
      << "t_max_1 = " << format_real(g.t_max_1) << '\n'
      << "t_max_2 = " << format_real(g.t_max_2) << '\n'
      << "time_col = " << p.time_col << '\n'
      << "event_col = " << p.event_col << '\n';
  std::string names;
  for (std::size_t i = 0; i < p.feature_names.size(); ++i) names += (i ? ";" : "") + p.feature_names[i];
  out << "features = " << names << '\n'
      << "feature_mean = " << detail::join_reals(p.standardizer.mean) << '\n'
      << "feature_scale = " << detail::join_reals(p.standardizer.scale) << '\n'
      << "risk_cutoff = " << format_real(p.risk_cutoff) << '\n';
}

inline Preprocessing read_preprocessing(const std::string& path) {
  Preprocessing p;
  std::optional<int> k;
  std::optional<double> t_min, t_max;
  auto real = [&](const std::string& key, const std::string& v) {
    if (v == "nan") return std::numeric_limits<double>::quiet_NaN();
    auto d = detail::parse_double(v);
    if (!d) throw ParseError(path + ": bad value for '" + key + "'");
    return *d;
  };
  for (const auto& [key, v] : read_key_value_file(path)) {
    if (key == "k_bins") k = static_cast<int>(real(key, v));
    else if (key == "t_min") t_min = real(key, v);
    else if (key == "t_max") t_max = real(key, v);
    else if (key == "time_col") p.time_col = v;
    else if (key == "event_col") p.event_col = v;
    else if (key == "features") p.feature_names = detail::split_list(v);
    else if (key == "feature_mean")
      for (const auto& x : detail::split_list(v)) p.standardizer.mean.push_back(real(key, x));
    else if (key == "feature_scale")
      for (const auto& x : detail::split_list(v)) p.standardizer.scale.push_back(real(key, x));
    else if (key == "risk_cutoff") p.risk_cutoff = real(key, v);
  }
  if (!k || !t_min || !t_max) throw ParseError(path + ": missing k_bins, t_min or t_max");
  // derived constants are recomputed from (t_min, t_max, K) so they are
  // bit-identical to the training run
  p.grid = make_time_grid(*t_min, *t_max, *k);
  if (p.standardizer.mean.size() != p.feature_names.size() || p.standardizer.scale.size() != p.feature_names.size()) {
    throw ParseError(path + ": feature statistics do not match the feature list");
  }
  return p;
}

// Train/validation(/test) splits, all sharing one TimeGrid built from the
// training split.
struct PreparedData {
  SurvivalDataset train, validation;
  std::optional<SurvivalDataset> test;
  std::shared_ptr<const TimeGrid> grid;
  CsvTable table;  // single-file mode only
  SplitIndices indices;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d;
  if (!cfg.train_data.empty()) {
    d.train = load_csv(cfg.train_data, cfg.time_col, cfg.event_col);
    d.validation = load_csv(cfg.val_data, cfg.time_col, cfg.event_col, d.train.standardizer);
    if (!cfg.test_data.empty()) d.test = load_csv(cfg.test_data, cfg.time_col, cfg.event_col, d.train.standardizer);
  } else {
    d.table = read_csv_table(cfg.data);
    const auto full = dataset_from_table(d.table, cfg.time_col, cfg.event_col);
    d.indices = split_indices(full.size(), cfg.split, cfg.train.seed);
    d.train = subset(full, d.indices.train);
    d.validation = subset(full, d.indices.validation);
    d.test = subset(full, d.indices.test);
  }
  d.grid = std::make_shared<const TimeGrid>(build_time_grid(d.train, cfg.k_bins));
  d.train.grid = d.validation.grid = d.grid;
  if (d.test) d.test->grid = d.grid;
  return d;
}

inline Preprocessing preprocessing_for(const ExperimentConfig& cfg, const PreparedData& d) {
  Preprocessing p;
  p.grid = *d.grid;
  p.feature_names = d.train.feature_names;
  p.standardizer = d.train.standardizer;
  p.time_col = cfg.time_col;
  p.event_col = cfg.event_col;
  return p;
}

// `prepare`: split once and write train/val/test CSVs (rows copied
// verbatim) plus the training grid file.
inline PreparedData cmd_prepare(const ExperimentConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("prepare needs a single 'data' CSV to split");
  auto d = prepare_data(cfg);
  detail::ensure_dir(cfg.out);
  const fs::path dir(cfg.out);
  write_csv_subset((dir / "train.csv").string(), d.table, d.indices.train);
  write_csv_subset((dir / "val.csv").string(), d.table, d.indices.validation);
  write_csv_subset((dir / "test.csv").string(), d.table, d.indices.test);
  auto out = detail::open_out(dir / kGridFile);
  write_preprocessing(out, preprocessing_for(cfg, d));
  return d;
}

struct TrainOutcome {
  FitResult fit;
  Preprocessing preprocessing;
  BinnedDataset train, validation;
  std::optional<BinnedDataset> test;
};

// Training without any file output.
inline TrainOutcome run_training(const ExperimentConfig& cfg, const PreparedData& d) {
  TrainOutcome o;
  o.train = bin_dataset(d.train, d.grid);
  o.validation = bin_dataset(d.validation, d.grid);
  if (d.test) o.test = bin_dataset(*d.test, d.grid);
  ModelConfig mc = cfg.model;
  mc.input_dim = static_cast<int>(d.train.n_features());
  mc.k_bins = cfg.k_bins;
  o.fit = fit(o.train, o.validation, mc, cfg.loss, cfg.train);
  o.preprocessing = preprocessing_for(cfg, d);
  const auto train_risks = risk_scores(predict_pmfs(o.fit.best_params, o.train.features()));
  try {
    o.preprocessing.risk_cutoff = select_cutoff(train_risks, o.train.times(), o.train.events());
  } catch (const InvalidArgument&) {
    // constant scores (e.g. an untrained model): no stratification possible
  }
  return o;
}

inline void write_training_artifacts(const ExperimentConfig& cfg, const TrainOutcome& o, const std::string& dir) {
  detail::ensure_dir(dir);
  const fs::path p(dir);
  save_checkpoint((p / kCheckpointFile).string(), o.fit.best_params);
  {
    auto out = detail::open_out(p / kHistoryFile);
    write_history_csv(out, o.fit.history);
  }
  {
    auto out = detail::open_out(p / kConfigEchoFile);
    write_config(out, cfg);
  }
  auto out = detail::open_out(p / kGridFile);
  write_preprocessing(out, o.preprocessing);
}

inline TrainOutcome cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto d = prepare_data(cfg);
  auto o = run_training(cfg, d);
  write_training_artifacts(cfg, o, cfg.out);
  if (!cfg.data.empty()) write_csv_subset((fs::path(cfg.out) / "test.csv").string(), d.table, d.indices.test);
  return o;
}

inline void write_report_files(const EvalReport& r, const std::string& dir, const std::string& model_name) {
  detail::ensure_dir(dir);
  const fs::path p(dir);
  {
    auto out = detail::open_out(p / "report.csv");
    write_report_csv(out, model_name, r);
  }
  {
    auto out = detail::open_out(p / "tdauc_curve.csv");
    write_curve_csv(out, "tdauc", r.tdauc_curve);
  }
  {
    auto out = detail::open_out(p / "brier_curve.csv");
    write_curve_csv(out, "brier", r.brier_curve);
  }
  {
    auto out = detail::open_out(p / "tdauc.svg");
    out << line_plot_svg("Time-dependent AUC", "time", "TDAUC", r.tdauc_curve, 0.0, 1.0);
  }
  auto out = detail::open_out(p / "brier.svg");
  out << line_plot_svg("Time-dependent Brier score", "time", "Brier score", r.brier_curve, 0.0, 0.5);
}

struct EvaluateOptions {
  std::string checkpoint;
  std::string test_csv;
  std::string grid_file;
  std::string out = "out";
  std::string time_col;   // empty: take from the grid file
  std::string event_col;
  std::string model_name = "model";
};

inline EvalReport cmd_evaluate(const EvaluateOptions& opt) {
  const auto params = load_checkpoint(opt.checkpoint);
  const auto prep = read_preprocessing(opt.grid_file);
  if (params.config.k_bins != prep.grid.k_bins) {
    throw InvalidArgument("checkpoint K=" + std::to_string(params.config.k_bins) + " does not match grid K=" +
                          std::to_string(prep.grid.k_bins));
  }
  const std::string tc = opt.time_col.empty() ? prep.time_col : opt.time_col;
  const std::string ec = opt.event_col.empty() ? prep.event_col : opt.event_col;
  auto test = load_csv(opt.test_csv, tc, ec, prep.standardizer);
  if (test.feature_names != prep.feature_names) {
    throw InvalidArgument("test file features do not match the training features");
  }
  if (static_cast<int>(test.n_features()) != params.config.input_dim) {
    throw InvalidArgument("checkpoint input_dim does not match the test features");
  }
  const auto grid = std::make_shared<const TimeGrid>(prep.grid);
  const auto binned = bin_dataset(test, grid);
  auto report = evaluate_model(params, binned, *grid, prep.risk_cutoff);
  write_report_files(report, opt.out, opt.model_name);
  return report;
}

// ---- ablation ---------------------------------------------------------------

struct AblationRow {
  bool mle = false;
  bool rank = false;
  bool tapr = false;
  bool calibration = false;

  std::string label() const {
    std::string s;
    auto add = [&](bool on, const char* name) {
      if (on) s += (s.empty() ? "" : "+") + std::string(name);
    };
    add(mle, "MLE");
    add(rank, "Rank");
    add(tapr, "TAPR");
    add(calibration, "Calibration");
    return s;
  }
};

// The six loss-component combinations of the standard ablation.
inline std::vector<AblationRow> default_ablation_grid() {
  return {
      {true, false, false, false},  {false, true, false, false}, {false, false, true, false},
      {true, true, false, false},   {true, false, true, false},  {true, false, true, true},
  };
}

inline LossWeights weights_for_row(const LossWeights& base, const AblationRow& row) {
  if (row.rank && row.tapr) throw ConfigError("an ablation row cannot enable both Rank and TAPR");
  if (!row.mle && !row.rank && !row.tapr && !row.calibration) throw ConfigError("empty ablation row");
  LossWeights w = base;
  w.alpha = row.mle ? base.alpha : 0.0;
  w.beta = (row.rank || row.tapr) ? base.beta : 0.0;
  w.pairwise_kind = row.rank ? PairwiseKind::Rank : PairwiseKind::Tapr;
  w.gamma = row.calibration ? base.gamma : 0.0;
  return w;
}

struct AblationResult {
  AblationRow row;
  EvalReport report;
};

inline void write_ablation_csv(std::ostream& out, const std::vector<AblationResult>& rows) {
  out << "mle,rank,tapr,calibration,c_index,ibs,m_tdauc\n";
  for (const auto& r : rows) {
    out << int(r.row.mle) << ',' << int(r.row.rank) << ',' << int(r.row.tapr) << ',' << int(r.row.calibration) << ','
        << format_real(r.report.c_index) << ',' << format_real(r.report.ibs) << ',' << format_real(r.report.m_tdauc)
        << '\n';
  }
}

// One model per row on a shared split and seed; each row's artifacts go to
// <out>/row<i>/, the summary table to <out>/ablation.csv.
inline std::vector<AblationResult> cmd_ablate(const ExperimentConfig& cfg, const std::vector<AblationRow>& grid) {
  cfg.validate();
  const auto d = prepare_data(cfg);
  if (!d.test) throw ConfigError("ablate needs a test split: use 'data' or set 'test_data'");
  std::vector<AblationResult> results;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ExperimentConfig row_cfg = cfg;
    row_cfg.loss = weights_for_row(cfg.loss, grid[i]);
    row_cfg.out = (fs::path(cfg.out) / ("row" + std::to_string(i + 1))).string();
    const auto o = run_training(row_cfg, d);
    write_training_artifacts(row_cfg, o, row_cfg.out);
    AblationResult r{grid[i], evaluate_model(o.fit.best_params, *o.test, *d.grid, o.preprocessing.risk_cutoff)};
    write_report_files(r.report, row_cfg.out, grid[i].label());
    results.push_back(std::move(r));
  }
  detail::ensure_dir(cfg.out);
  auto out = detail::open_out(fs::path(cfg.out) / "ablation.csv");
  write_ablation_csv(out, results);
  return results;
}

// `synth`: writes <out>/synth.csv and its oracle sidecar.
inline SynthData cmd_synth(const SynthConfig& sc, const std::string& out_dir) {
  auto data = generate(sc);
  detail::ensure_dir(out_dir);
  write_synth_csv((fs::path(out_dir) / "synth.csv").string(), data, sc.seed);
  return data;
}

}  // namespace triplesurv
