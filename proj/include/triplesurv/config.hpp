#pragma once

// Experiment configuration: a flat `key = value` text file, '#' starts a
// comment. Later assignments win, so command-line overrides are applied by
// calling set() after the file has been read.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "triplesurv/checkpoint.hpp"
#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/losses.hpp"
#include "triplesurv/model.hpp"
#include "triplesurv/training.hpp"

namespace triplesurv {

struct ExperimentConfig {
  std::string data;        // single CSV, split by `split`
  std::string train_data;  // or explicit train/validation files
  std::string val_data;
  std::string test_data;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  std::string time_col = "time";
  std::string event_col = "event";
  int k_bins = 10;
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  std::string out = "out";

  ExperimentConfig() { model.k_bins = k_bins; }

  void set(const std::string& key, const std::string& value);
  void validate() const;
  // Every key with its current value, one `key = value` line each.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

namespace detail {

inline double to_real(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  return *d;
}

inline long long to_int(const std::string& key, const std::string& v) {
  const double d = to_real(key, v);
  if (d != std::floor(d)) throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

inline std::array<double, 3> to_ratios(const std::string& key, const std::string& v) {
  std::vector<std::string> parts;
  std::istringstream in(v);
  for (std::string part; std::getline(in, part, ':');) parts.push_back(part);
  if (parts.size() != 3) throw ConfigError("config key '" + key + "' expects a:b:c ratios");
  std::array<double, 3> r{};
  for (std::size_t i = 0; i < 3; ++i) {
    r[i] = to_real(key, parts[i]);
    if (!(r[i] > 0.0)) throw ConfigError("split ratios must be positive");
  }
  const double sum = r[0] + r[1] + r[2];
  for (auto& x : r) x /= sum;
  return r;
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = detail::trim(raw);
  using detail::to_int;
  using detail::to_real;
  if (key == "data") data = v;
  else if (key == "train_data") train_data = v;
  else if (key == "val_data") val_data = v;
  else if (key == "test_data") test_data = v;
  else if (key == "split") split = detail::to_ratios(key, v);
  else if (key == "time_col") time_col = v;
  else if (key == "event_col") event_col = v;
  else if (key == "k_bins") model.k_bins = k_bins = static_cast<int>(to_int(key, v));
  else if (key == "hidden_dim") model.hidden_dim = static_cast<int>(to_int(key, v));
  else if (key == "n_blocks") model.n_blocks = static_cast<int>(to_int(key, v));
  else if (key == "dropout") model.dropout_rate = to_real(key, v);
  else if (key == "head") model.head = parse_head(v);
  else if (key == "alpha") loss.alpha = to_real(key, v);
  else if (key == "beta") loss.beta = to_real(key, v);
  else if (key == "gamma") loss.gamma = to_real(key, v);
  else if (key == "sigma") loss.sigma = to_real(key, v);
  else if (key == "rho") loss.rho = to_real(key, v);
  else if (key == "calib_bins") loss.g_bins = static_cast<int>(to_int(key, v));
  else if (key == "likelihood_mode") loss.likelihood_mode = parse_likelihood_mode(v);
  else if (key == "pairwise_sign") loss.pairwise_sign = parse_pairwise_sign(v);
  else if (key == "pairwise") loss.pairwise_kind = parse_pairwise_kind(v);
  else if (key == "epochs") train.epochs = static_cast<int>(to_int(key, v));
  else if (key == "batch_size") train.batch_size = static_cast<int>(to_int(key, v));
  else if (key == "lr_init") train.lr_init = to_real(key, v);
  else if (key == "momentum") train.momentum = to_real(key, v);
  else if (key == "weight_decay") train.weight_decay = to_real(key, v);
  else if (key == "eval_every") train.eval_every = static_cast<int>(to_int(key, v));
  else if (key == "seed") {
    const auto s = to_int(key, v);
    if (s < 0) throw ConfigError("seed must be non-negative");
    train.seed = static_cast<std::uint64_t>(s);
  } else if (key == "out") out = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void ExperimentConfig::validate() const {
  if (data.empty() && train_data.empty()) throw ConfigError("no data: set 'data' or 'train_data'");
  if (!train_data.empty() && val_data.empty()) throw ConfigError("'train_data' needs a matching 'val_data'");
  try {
    // input_dim is only known once the data is read
    ModelConfig m = model;
    if (m.input_dim == 0) m.input_dim = 1;
    m.validate();
    loss.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

inline std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  const auto r = format_real;
  return {
      {"data", data},
      {"train_data", train_data},
      {"val_data", val_data},
      {"test_data", test_data},
      {"split", r(split[0]) + ":" + r(split[1]) + ":" + r(split[2])},
      {"time_col", time_col},
      {"event_col", event_col},
      {"k_bins", std::to_string(k_bins)},
      {"hidden_dim", std::to_string(model.hidden_dim)},
      {"n_blocks", std::to_string(model.n_blocks)},
      {"dropout", r(model.dropout_rate)},
      {"head", to_string(model.head)},
      {"alpha", r(loss.alpha)},
      {"beta", r(loss.beta)},
      {"gamma", r(loss.gamma)},
      {"sigma", r(loss.sigma)},
      {"rho", r(loss.rho)},
      {"calib_bins", std::to_string(loss.g_bins)},
      {"likelihood_mode", to_string(loss.likelihood_mode)},
      {"pairwise_sign", to_string(loss.pairwise_sign)},
      {"pairwise", to_string(loss.pairwise_kind)},
      {"epochs", std::to_string(train.epochs)},
      {"batch_size", std::to_string(train.batch_size)},
      {"lr_init", r(train.lr_init)},
      {"momentum", r(train.momentum)},
      {"weight_decay", r(train.weight_decay)},
      {"eval_every", std::to_string(train.eval_every)},
      {"seed", std::to_string(train.seed)},
      {"out", out},
  };
}

// Parses `key = value` lines. Blank lines and '#' comments are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
    }
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline std::vector<std::pair<std::string, std::string>> read_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return parse_key_values(in, path);
}

inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  cfg.set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : read_key_value_file(path)) cfg.set(k, v);
  return cfg;
}

inline void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  out << "# resolved configuration\n";
  for (const auto& [k, v] : cfg.entries()) out << k << " = " << v << '\n';
}

}  // namespace triplesurv
