#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "triplesurv/checkpoint.hpp"
#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/metrics.hpp"

namespace triplesurv {

enum class RiskModel { Linear, Quadratic };
enum class BaselineKind { Exponential, Weibull };

struct SynthConfig {
  int n_samples = 1000;
  int n_features = 10;
  RiskModel risk_model = RiskModel::Linear;
  BaselineKind baseline = BaselineKind::Weibull;
  double weibull_shape = 1.5;
  double baseline_rate = 0.1;
  // Standard deviation of the linear part of the latent risk.
  double risk_scale = 1.0;
  double target_censor_rate = 0.3;
  double censor_tolerance = 0.02;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_samples < 1 || n_features < 1) throw InvalidArgument("synth: sizes must be positive");
    if (!(target_censor_rate >= 0.0 && target_censor_rate < 1.0)) {
      throw InvalidArgument("synth: target_censor_rate must lie in [0, 1)");
    }
    if (!(weibull_shape > 0.0) || !(baseline_rate > 0.0) || risk_scale < 0.0) {
      throw InvalidArgument("synth: baseline parameters must be positive");
    }
  }
};

struct SynthData {
  SurvivalDataset dataset;
  std::vector<double> oracle_risks;  // latent r(x); never used for training
  double censor_rate = 0.0;
  double censor_hazard = 0.0;  // 0 when censoring is disabled
};

// Proportional-hazards generator: S(t | x) = exp(-(lambda * t)^shape * e^{r(x)})
// with shape = 1 for the exponential baseline. Censoring is an independent
// exponential whose rate is tuned by bisection to the requested fraction.
inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.n_features);
  const auto n = static_cast<std::size_t>(cfg.n_samples);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<double> w(d);
  double norm = 0.0;
  for (auto& v : w) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : w) v *= cfg.risk_scale / norm;

  std::vector<double> quad;
  if (cfg.risk_model == RiskModel::Quadratic) {
    quad.assign(d * d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b <= a; ++b) quad[a * d + b] = quad[b * d + a] = 0.5 * normal(rng) / static_cast<double>(d);
  }

  const double shape = cfg.baseline == BaselineKind::Weibull ? cfg.weibull_shape : 1.0;
  SynthData out;
  out.dataset.feature_names.reserve(d);
  for (std::size_t j = 0; j < d; ++j) out.dataset.feature_names.push_back("x" + std::to_string(j + 1));
  out.dataset.standardizer.mean.assign(d, 0.0);
  out.dataset.standardizer.scale.assign(d, 1.0);

  std::vector<double> event_time(n), unit_censor(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.features.resize(d);
    for (auto& x : s.features) x = normal(rng);
    double r = 0.0;
    for (std::size_t j = 0; j < d; ++j) r += w[j] * s.features[j];
    if (!quad.empty()) {
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) r += s.features[a] * quad[a * d + b] * s.features[b];
    }
    const double u = 1.0 - uniform(rng);  // (0, 1]
    const double v = 1.0 - uniform(rng);
    event_time[i] = std::pow(-std::log(u) * std::exp(-r), 1.0 / shape) / cfg.baseline_rate;
    if (!(event_time[i] > 0.0)) event_time[i] = std::numeric_limits<double>::min();
    unit_censor[i] = -std::log(v);
    out.oracle_risks.push_back(r);
    out.dataset.samples.push_back(std::move(s));
  }

  auto censored_fraction = [&](double hazard) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += unit_censor[i] / hazard < event_time[i] ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(n);
  };

  double hazard = 0.0;
  if (cfg.target_censor_rate > 0.0) {
    // censored fraction is non-decreasing in the hazard; bisect on log scale
    double lo = std::log(1e-12), hi = std::log(1e12);
    double best_gap = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double rate = censored_fraction(std::exp(mid));
      const double gap = std::abs(rate - cfg.target_censor_rate);
      if (gap < best_gap) {
        best_gap = gap;
        hazard = std::exp(mid);
      }
      if (gap <= cfg.censor_tolerance * 0.25) break;
      (rate < cfg.target_censor_rate ? lo : hi) = mid;
    }
    if (best_gap > cfg.censor_tolerance) {
      throw InvalidArgument("synth: censoring rate " + std::to_string(cfg.target_censor_rate) +
                            " is not attainable for this sample");
    }
  }
  out.censor_hazard = hazard;

  std::size_t n_censored = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out.dataset.samples[i];
    const double c = hazard > 0.0 ? unit_censor[i] / hazard : std::numeric_limits<double>::infinity();
    if (c < event_time[i]) {
      s.time = c;
      s.event = 0;
      ++n_censored;
    } else {
      s.time = event_time[i];
      s.event = 1;
    }
  }
  out.censor_rate = static_cast<double>(n_censored) / static_cast<double>(n);
  return out;
}

// C-index of the true latent risk: the ceiling for any model on this data.
inline double bayes_c_index(std::span<const double> oracle_risks, std::span<const double> times,
                            std::span<const int> events) {
  return c_index(oracle_risks, times, events);
}

// Writes `<path>` as a core-data CSV (x1..xd,time,event) and
// `<path>.oracle.csv` with columns row,oracle_risk,seed.
inline void write_synth_csv(const std::string& path, const SynthData& data, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& name : data.dataset.feature_names) out << name << ',';
  out << "time,event\n";
  for (const auto& s : data.dataset.samples) {
    for (double x : s.features) out << format_real(x) << ',';
    out << format_real(s.time) << ',' << s.event << '\n';
  }
  std::ofstream side(path + ".oracle.csv");
  if (!side) throw Error("cannot write '" + path + ".oracle.csv'");
  side << "row,oracle_risk,seed\n";
  for (std::size_t i = 0; i < data.oracle_risks.size(); ++i)
    side << i + 1 << ',' << format_real(data.oracle_risks[i]) << ',' << seed << '\n';
}

}  // namespace triplesurv
