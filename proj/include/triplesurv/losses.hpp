#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/linalg.hpp"
#include "triplesurv/model.hpp"

namespace triplesurv {

enum class LikelihoodMode { Prob, LogProb };

// Orientation of the pairwise terms.
//
// Concordant: each pair contributes exp(-sigma * gap) and the pairwise loss
//   is added to the total (+beta), so descent widens the gap.
// Verbatim: each pair contributes exp(+sigma * gap) and the pairwise loss is
//   subtracted from the total (-beta), so descent again widens the gap.
enum class PairwiseSign { Concordant, Verbatim };

// Which pairwise objective fills the beta slot.
enum class PairwiseKind { Tapr, Rank };

inline std::string to_string(LikelihoodMode m) { return m == LikelihoodMode::Prob ? "prob" : "logprob"; }
inline std::string to_string(PairwiseSign s) { return s == PairwiseSign::Concordant ? "concordant" : "verbatim"; }
inline std::string to_string(PairwiseKind k) { return k == PairwiseKind::Tapr ? "tapr" : "rank"; }

inline LikelihoodMode parse_likelihood_mode(const std::string& s) {
  if (s == "prob") return LikelihoodMode::Prob;
  if (s == "logprob") return LikelihoodMode::LogProb;
  throw ConfigError("unknown likelihood_mode '" + s + "' (expected prob or logprob)");
}

inline PairwiseSign parse_pairwise_sign(const std::string& s) {
  if (s == "concordant") return PairwiseSign::Concordant;
  if (s == "verbatim") return PairwiseSign::Verbatim;
  throw ConfigError("unknown pairwise_sign '" + s + "' (expected concordant or verbatim)");
}

inline PairwiseKind parse_pairwise_kind(const std::string& s) {
  if (s == "tapr") return PairwiseKind::Tapr;
  if (s == "rank") return PairwiseKind::Rank;
  throw ConfigError("unknown pairwise '" + s + "' (expected tapr or rank)");
}

// s in exp(s * sigma * ...)
inline double pairwise_exponent_sign(PairwiseSign s) { return s == PairwiseSign::Concordant ? -1.0 : 1.0; }

// Coefficient multiplying beta * l_pairwise in the combined loss.
inline double pairwise_coefficient(PairwiseSign s) { return s == PairwiseSign::Concordant ? 1.0 : -1.0; }

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double sigma = 1.0;
  double rho = 1.0;
  int g_bins = 10;
  LikelihoodMode likelihood_mode = LikelihoodMode::Prob;
  PairwiseSign pairwise_sign = PairwiseSign::Concordant;
  PairwiseKind pairwise_kind = PairwiseKind::Tapr;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw InvalidArgument("loss weights must be non-negative");
    if (!(sigma > 0.0 && sigma <= 1.0)) throw InvalidArgument("sigma must lie in (0, 1]");
    if (rho < 0.0) throw InvalidArgument("rho must be non-negative");
    if (g_bins < 1) throw InvalidArgument("calib_bins must be >= 1");
  }
};

inline constexpr double kLogFloor = 1e-12;

using BatchView = std::span<const BinnedSample>;

// Pairs (i, j) with sample i an event and t_j > t_i (normalized time).
struct ComparablePairs {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t n_events = 0;  // |A^1|
};

inline ComparablePairs comparable_pairs(BatchView batch) {
  ComparablePairs out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].event != 1) continue;
    ++out.n_events;
    for (std::size_t j = 0; j < batch.size(); ++j)
      if (batch[j].t_norm > batch[i].t_norm) out.pairs.emplace_back(i, j);
  }
  return out;
}

struct PmfLoss {
  double value = 0.0;
  Matrix grad;  // d value / d pmf, n x K
  bool no_pairs = false;
};

struct RiskLoss {
  double value = 0.0;
  std::vector<double> grad;  // d value / d risk
  bool no_pairs = false;
};

namespace detail {

inline void check_batch(const Matrix& pmfs, BatchView batch) {
  if (static_cast<std::size_t>(pmfs.rows()) != batch.size()) throw InvalidArgument("pmf rows differ from batch size");
  if (batch.empty()) throw InvalidArgument("empty batch");
  for (const auto& s : batch)
    if (s.bin < 1 || s.bin > pmfs.cols()) throw InvalidArgument("sample bin outside 1..K");
}

}  // namespace detail

// Mean over the batch of p_k (events) or 1 - sum_{i<=k} p_i (censored);
// LogProb takes logs of the same terms, floored at 1e-12.
inline PmfLoss likelihood_loss(const Matrix& pmfs, BatchView batch, LikelihoodMode mode) {
  detail::check_batch(pmfs, batch);
  const double n = static_cast<double>(batch.size());
  PmfLoss out;
  out.grad = Matrix::Zero(pmfs.rows(), pmfs.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int k = batch[i].bin;
    double term = 0.0;
    if (batch[i].event == 1) {
      term = pmfs(r, k - 1);
    } else {
      term = 1.0;
      for (int m = 0; m < k; ++m) term -= pmfs(r, m);
    }
    double scale = 1.0 / n;  // d(per-sample value)/d(term), divided by n
    if (mode == LikelihoodMode::LogProb) {
      if (term > kLogFloor) {
        scale = 1.0 / (term * n);
        term = std::log(term);
      } else {
        scale = 0.0;
        term = std::log(kLogFloor);
      }
    }
    out.value += term;
    if (batch[i].event == 1) {
      out.grad(r, k - 1) += scale;
    } else {
      for (int m = 0; m < k; ++m) out.grad(r, m) -= scale;
    }
  }
  out.value /= n;
  return out;
}

// (1/|A1|) sum over comparable pairs of exp(s*sigma*[(r_i - r_j) - rho*(t_j - t_i)]).
inline RiskLoss tapr_loss(std::span<const double> risks, BatchView batch, double sigma, double rho, PairwiseSign sign) {
  if (risks.size() != batch.size()) throw InvalidArgument("tapr_loss: risk count differs from batch size");
  RiskLoss out;
  out.grad.assign(risks.size(), 0.0);
  const auto cp = comparable_pairs(batch);
  if (cp.pairs.empty()) {
    out.no_pairs = true;
    return out;
  }
  const double s = pairwise_exponent_sign(sign);
  const double inv = 1.0 / static_cast<double>(cp.n_events);
  for (const auto& [i, j] : cp.pairs) {
    const double gap = (risks[i] - risks[j]) - rho * (batch[j].t_norm - batch[i].t_norm);
    const double term = std::exp(s * sigma * gap) * inv;
    out.value += term;
    out.grad[i] += s * sigma * term;
    out.grad[j] -= s * sigma * term;
  }
  return out;
}

// Pairwise rank term on the CDF at the event bin of sample i:
// (1/|A1|) sum exp(s*sigma*(F_i(t_i) - F_j(t_i))).
inline PmfLoss rank_loss(const Matrix& pmfs, BatchView batch, double sigma, PairwiseSign sign) {
  detail::check_batch(pmfs, batch);
  PmfLoss out;
  out.grad = Matrix::Zero(pmfs.rows(), pmfs.cols());
  const auto cp = comparable_pairs(batch);
  if (cp.pairs.empty()) {
    out.no_pairs = true;
    return out;
  }
  const double s = pairwise_exponent_sign(sign);
  const double inv = 1.0 / static_cast<double>(cp.n_events);
  auto cdf = [&](std::size_t row, int k) {
    double f = 0.0;
    for (int m = 0; m < k; ++m) f += pmfs(static_cast<Eigen::Index>(row), m);
    return f;
  };
  for (const auto& [i, j] : cp.pairs) {
    const int k = batch[i].bin;
    const double term = std::exp(s * sigma * (cdf(i, k) - cdf(j, k))) * inv;
    out.value += term;
    for (int m = 0; m < k; ++m) {
      out.grad(static_cast<Eigen::Index>(i), m) += s * sigma * term;
      out.grad(static_cast<Eigen::Index>(j), m) -= s * sigma * term;
    }
  }
  return out;
}

// G contiguous intervals [a_g, b_g) covering [0, 1).
struct CalibrationBins {
  std::vector<double> edges;  // G + 1 values, edges.front() = 0, edges.back() = 1

  static CalibrationBins equal_width(int g_bins) {
    if (g_bins < 1) throw InvalidArgument("calibration needs at least one interval");
    CalibrationBins b;
    for (int g = 0; g <= g_bins; ++g) b.edges.push_back(static_cast<double>(g) / g_bins);
    return b;
  }

  int size() const { return static_cast<int>(edges.size()) - 1; }
};

// (1/G') sum_g (pred_g - obse_g)^2 over the G' intervals whose ratios are
// defined. obse_g is data only; the gradient flows through pred_g.
inline PmfLoss calibration_loss(const Matrix& pmfs, BatchView batch, const CalibrationBins& bins) {
  detail::check_batch(pmfs, batch);
  const int k_bins = static_cast<int>(pmfs.cols());
  PmfLoss out;
  out.grad = Matrix::Zero(pmfs.rows(), pmfs.cols());

  struct Term {
    int g;
    double pred, obse, denom;
  };
  std::vector<Term> terms;
  for (int g = 0; g < bins.size(); ++g) {
    const double a = bins.edges[static_cast<std::size_t>(g)];
    const double b = bins.edges[static_cast<std::size_t>(g + 1)];
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
      for (int k = 1; k <= k_bins; ++k) {
        const double mid = bin_midpoint(k, k_bins);
        if (mid >= a && mid < b) num += pmfs(i, k - 1);
        if (mid >= a) den += pmfs(i, k - 1);
      }
    }
    std::size_t failures = 0, at_risk = 0;
    for (const auto& s : batch) {
      if (s.t_norm >= a) ++at_risk;
      if (s.event == 1 && s.t_norm >= a && s.t_norm < b) ++failures;
    }
    if (den <= 0.0 || at_risk == 0) continue;
    terms.push_back({g, num / den, static_cast<double>(failures) / static_cast<double>(at_risk), den});
  }
  if (terms.empty()) return out;

  const double inv_g = 1.0 / static_cast<double>(terms.size());
  for (const auto& t : terms) {
    const double diff = t.pred - t.obse;
    out.value += diff * diff;
    const double a = bins.edges[static_cast<std::size_t>(t.g)];
    const double b = bins.edges[static_cast<std::size_t>(t.g + 1)];
    const double d_pred = 2.0 * diff * inv_g;
    for (int k = 1; k <= k_bins; ++k) {
      const double mid = bin_midpoint(k, k_bins);
      const double inside = (mid >= a && mid < b) ? 1.0 : 0.0;
      const double tail = mid >= a ? 1.0 : 0.0;
      const double d = d_pred * (inside - t.pred * tail) / t.denom;
      if (d != 0.0) out.grad.col(k - 1).array() += d;
    }
  }
  out.value *= inv_g;
  return out;
}

struct TripleSurvLoss {
  double value = 0.0;
  Matrix grad;  // d value / d pmf
  double likelihood = 0.0;
  double pairwise = 0.0;
  double calibration = 0.0;
  bool no_pairs = false;
};

// -alpha * likelihood + c * beta * pairwise + gamma * calibration, with
// c = pairwise_coefficient(sign). Components with zero weight are skipped.
inline TripleSurvLoss triplesurv_loss(const Matrix& pmfs, BatchView batch, const LossWeights& w) {
  w.validate();
  if (w.alpha == 0.0 && w.beta == 0.0 && w.gamma == 0.0) throw InvalidArgument("all loss weights are zero");
  detail::check_batch(pmfs, batch);
  const int k_bins = static_cast<int>(pmfs.cols());
  TripleSurvLoss out;
  out.grad = Matrix::Zero(pmfs.rows(), pmfs.cols());

  if (w.alpha > 0.0) {
    const auto l = likelihood_loss(pmfs, batch, w.likelihood_mode);
    out.likelihood = l.value;
    out.value -= w.alpha * l.value;
    out.grad -= w.alpha * l.grad;
  }
  if (w.beta > 0.0) {
    const double c = pairwise_coefficient(w.pairwise_sign) * w.beta;
    if (w.pairwise_kind == PairwiseKind::Tapr) {
      const auto risks = risk_scores(pmfs);
      const auto l = tapr_loss(risks, batch, w.sigma, w.rho, w.pairwise_sign);
      out.pairwise = l.value;
      out.no_pairs = l.no_pairs;
      out.value += c * l.value;
      // d risk / d p_k = 1 - mid_k
      for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
        const double g = l.grad[static_cast<std::size_t>(i)];
        if (g == 0.0) continue;
        for (int k = 1; k <= k_bins; ++k) out.grad(i, k - 1) += c * g * (1.0 - bin_midpoint(k, k_bins));
      }
    } else {
      const auto l = rank_loss(pmfs, batch, w.sigma, w.pairwise_sign);
      out.pairwise = l.value;
      out.no_pairs = l.no_pairs;
      out.value += c * l.value;
      out.grad += c * l.grad;
    }
  }
  if (w.gamma > 0.0) {
    const auto l = calibration_loss(pmfs, batch, CalibrationBins::equal_width(w.g_bins));
    out.calibration = l.value;
    out.value += w.gamma * l.value;
    out.grad += w.gamma * l.grad;
  }
  return out;
}

}  // namespace triplesurv
