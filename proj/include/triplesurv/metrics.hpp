#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/linalg.hpp"
#include "triplesurv/model.hpp"

namespace triplesurv {

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b, std::size_t c, const char* who) {
  if (a != b || a != c) throw InvalidArgument(std::string(who) + ": input lengths differ");
}

inline std::vector<std::size_t> order_by(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

// Fenwick tree over 1-based ranks.
class CountTree {
 public:
  explicit CountTree(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t rank) {
    for (; rank < tree_.size(); rank += rank & (~rank + 1)) ++tree_[rank];
  }
  std::uint64_t prefix(std::size_t rank) const {
    std::uint64_t s = 0;
    for (; rank > 0; rank -= rank & (~rank + 1)) s += tree_[rank];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace detail

enum class KmTarget { Event, Censoring };

// Product-limit estimate. Censoring target treats censorings as the events
// of interest (for the censoring survival function G).
struct KMCurve {
  std::vector<double> knots;     // distinct target-event times, ascending
  std::vector<double> survival;  // value on [knot_m, knot_{m+1})
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> n_events;

  // S(t), right-continuous.
  double at(double t) const {
    const auto it = std::upper_bound(knots.begin(), knots.end(), t);
    if (it == knots.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - knots.begin()) - 1];
  }

  // S(t-), the value just before t.
  double before(double t) const {
    const auto it = std::lower_bound(knots.begin(), knots.end(), t);
    if (it == knots.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - knots.begin()) - 1];
  }
};

inline KMCurve kaplan_meier(std::span<const double> times, std::span<const int> events, KmTarget target) {
  if (times.empty()) throw InvalidArgument("kaplan_meier: empty input");
  if (times.size() != events.size()) throw InvalidArgument("kaplan_meier: input lengths differ");
  const auto order = detail::order_by(times);
  KMCurve km;
  double s = 1.0;
  std::size_t remaining = times.size();
  for (std::size_t pos = 0; pos < order.size();) {
    const double t = times[order[pos]];
    std::size_t block = 0, hits = 0;
    for (; pos < order.size() && times[order[pos]] == t; ++pos, ++block) {
      const bool observed = events[order[pos]] == 1;
      if (observed == (target == KmTarget::Event)) ++hits;
    }
    if (hits > 0) {
      s *= 1.0 - static_cast<double>(hits) / static_cast<double>(remaining);
      km.knots.push_back(t);
      km.survival.push_back(s);
      km.at_risk.push_back(remaining);
      km.n_events.push_back(hits);
    }
    remaining -= block;
  }
  return km;
}

// Harrell's C over comparable pairs (event i, t_i < t_j); ties in score
// count one half. O(n log n).
inline double c_index(std::span<const double> scores, std::span<const double> times, std::span<const int> events) {
  detail::check_lengths(scores.size(), times.size(), events.size(), "c_index");
  const std::size_t n = scores.size();
  std::vector<double> unique(scores.begin(), scores.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  auto rank_of = [&](double s) {
    return static_cast<std::size_t>(std::lower_bound(unique.begin(), unique.end(), s) - unique.begin()) + 1;
  };

  auto order = detail::order_by(times);
  std::reverse(order.begin(), order.end());  // descending time

  detail::CountTree tree(unique.size());
  std::uint64_t inserted = 0, pairs = 0, twice_concordant = 0;
  for (std::size_t pos = 0; pos < n;) {
    std::size_t end = pos;
    while (end < n && times[order[end]] == times[order[pos]]) ++end;
    for (std::size_t q = pos; q < end; ++q) {
      const std::size_t i = order[q];
      if (events[i] != 1) continue;
      const std::size_t r = rank_of(scores[i]);
      const std::uint64_t lower = tree.prefix(r - 1);
      const std::uint64_t equal = tree.prefix(r) - lower;
      pairs += inserted;
      twice_concordant += 2 * lower + equal;
    }
    for (std::size_t q = pos; q < end; ++q) {
      tree.add(rank_of(scores[order[q]]));
      ++inserted;
    }
    pos = end;
  }
  if (pairs == 0) throw UndefinedMetric("c_index: no comparable pairs");
  return static_cast<double>(twice_concordant) / (2.0 * static_cast<double>(pairs));
}

// Cumulative-case / dynamic-control AUC at time t:
// cases t_i <= t with an event, controls t_i > t. Empty side -> nullopt.
inline std::optional<double> tdauc(std::span<const double> scores, std::span<const double> times,
                                   std::span<const int> events, double t) {
  detail::check_lengths(scores.size(), times.size(), events.size(), "tdauc");
  std::vector<double> controls;
  std::vector<double> cases;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (times[i] > t) {
      controls.push_back(scores[i]);
    } else if (events[i] == 1) {
      cases.push_back(scores[i]);
    }
  }
  if (cases.empty() || controls.empty()) return std::nullopt;
  std::sort(controls.begin(), controls.end());
  std::uint64_t twice_wins = 0;
  for (double s : cases) {
    const auto lo = std::lower_bound(controls.begin(), controls.end(), s);
    const auto hi = std::upper_bound(lo, controls.end(), s);
    twice_wins += 2 * static_cast<std::uint64_t>(lo - controls.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(cases.size()) * static_cast<double>(controls.size()));
}

inline std::vector<std::pair<double, double>> tdauc_curve(std::span<const double> scores, std::span<const double> times,
                                                          std::span<const int> events, std::span<const double> t_grid) {
  std::vector<std::pair<double, double>> curve;
  for (double t : t_grid)
    if (auto a = tdauc(scores, times, events, t)) curve.emplace_back(t, *a);
  return curve;
}

inline double m_tdauc(std::span<const double> scores, std::span<const double> times, std::span<const int> events,
                      std::span<const double> t_grid) {
  if (t_grid.empty()) throw InvalidArgument("m_tdauc: empty time grid");
  const auto curve = tdauc_curve(scores, times, events, t_grid);
  if (curve.empty()) throw UndefinedMetric("m_tdauc: no evaluable time points");
  double sum = 0.0;
  for (const auto& [t, a] : curve) sum += a;
  return sum / static_cast<double>(curve.size());
}

struct BrierDiagnostics {
  std::size_t excluded = 0;  // samples dropped because G-hat was zero
};

// Survival estimate used for sample i at time t*: mass beyond the bin that
// contains t*.
inline int bin_at_time(double t_star, const TimeGrid& grid) {
  return assign_bin(normalize_time(t_star, grid), grid.k_bins);
}

// IPCW Brier score at t*. Events before t* are weighted by 1/G(t_i-),
// samples still at risk by 1/G(t*); censored-before-t* samples add zero.
inline double brier_score_t(const Matrix& pmfs, std::span<const double> times, std::span<const int> events,
                            double t_star, const KMCurve& censor_km, const TimeGrid& grid,
                            BrierDiagnostics* diag = nullptr) {
  detail::check_lengths(static_cast<std::size_t>(pmfs.rows()), times.size(), events.size(), "brier_score_t");
  if (times.empty()) throw InvalidArgument("brier_score_t: empty input");
  const int k_star = bin_at_time(t_star, grid);
  const double g_star = censor_km.at(t_star);
  const auto k = static_cast<std::size_t>(pmfs.cols());
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double surv =
        predict_survival(std::span<const double>(pmfs.row(static_cast<Eigen::Index>(i)).data(), k), k_star);
    if (times[i] <= t_star && events[i] == 1) {
      const double g = censor_km.before(times[i]);
      if (!(g > 0.0)) {
        if (diag) ++diag->excluded;
        continue;
      }
      sum += surv * surv / g;
    } else if (times[i] > t_star) {
      if (!(g_star > 0.0)) {
        if (diag) ++diag->excluded;
        continue;
      }
      sum += (1.0 - surv) * (1.0 - surv) / g_star;
    }
    ++used;
  }
  if (used == 0) throw UndefinedMetric("brier_score_t: every sample was excluded");
  return sum / static_cast<double>(used);
}

// Trapezoidal integral of y over x divided by the span of x. A single point
// returns its value.
inline double time_average(std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty() || xs.size() != ys.size()) throw InvalidArgument("time_average: bad curve");
  if (xs.size() == 1) return ys[0];
  double area = 0.0;
  for (std::size_t m = 1; m < xs.size(); ++m) {
    if (!(xs[m] > xs[m - 1])) throw InvalidArgument("time_average: grid must be strictly ascending");
    area += 0.5 * (ys[m] + ys[m - 1]) * (xs[m] - xs[m - 1]);
  }
  return area / (xs.back() - xs.front());
}

inline std::vector<std::pair<double, double>> brier_curve(const Matrix& pmfs, std::span<const double> times,
                                                          std::span<const int> events, std::span<const double> t_grid,
                                                          const TimeGrid& grid) {
  const auto censor_km = kaplan_meier(times, events, KmTarget::Censoring);
  std::vector<std::pair<double, double>> curve;
  curve.reserve(t_grid.size());
  for (double t : t_grid) curve.emplace_back(t, brier_score_t(pmfs, times, events, t, censor_km, grid));
  return curve;
}

inline double ibs(const Matrix& pmfs, std::span<const double> times, std::span<const int> events,
                  std::span<const double> t_grid, const TimeGrid& grid) {
  const auto curve = brier_curve(pmfs, times, events, t_grid, grid);
  std::vector<double> xs, ys;
  for (const auto& [t, b] : curve) {
    xs.push_back(t);
    ys.push_back(b);
  }
  return time_average(xs, ys);
}

// Evaluation times: the interior bin edges that fall inside (0, T*], then T*
// itself (T* defaults to the training t_max).
inline std::vector<double> default_eval_times(const TimeGrid& grid, std::optional<double> horizon = std::nullopt) {
  const double t_end = horizon.value_or(grid.t_max);
  std::vector<double> out;
  for (int k = 2; k <= grid.k_bins; ++k) {
    const double edge = bin_lower_edge_time(k, grid);
    if (edge > 0.0 && edge < t_end) out.push_back(edge);
  }
  out.push_back(t_end);
  return out;
}

// ---- group comparison -----------------------------------------------------

struct LogRankTable {
  double observed_a = 0.0, expected_a = 0.0;
  double observed_b = 0.0, expected_b = 0.0;
  double variance = 0.0;

  double statistic() const {
    if (!(variance > 0.0)) return 0.0;
    const double d = observed_a - expected_a;
    return d * d / variance;
  }
};

namespace detail {

// `order` sorts samples by ascending time.
inline LogRankTable log_rank_table(std::span<const double> times, std::span<const int> events,
                                   const std::vector<char>& in_a, const std::vector<std::size_t>& order) {
  LogRankTable tab;
  double n = static_cast<double>(times.size());
  double n_a = 0.0;
  for (char a : in_a) n_a += a ? 1.0 : 0.0;
  for (std::size_t pos = 0; pos < order.size();) {
    const double t = times[order[pos]];
    double block = 0.0, block_a = 0.0, d = 0.0, d_a = 0.0;
    for (; pos < order.size() && times[order[pos]] == t; ++pos) {
      const std::size_t i = order[pos];
      block += 1.0;
      if (in_a[i]) block_a += 1.0;
      if (events[i] == 1) {
        d += 1.0;
        if (in_a[i]) d_a += 1.0;
      }
    }
    if (d > 0.0) {
      const double frac = n_a / n;
      tab.observed_a += d_a;
      tab.observed_b += d - d_a;
      tab.expected_a += d * frac;
      tab.expected_b += d * (1.0 - frac);
      if (n > 1.0) tab.variance += d * frac * (1.0 - frac) * (n - d) / (n - 1.0);
    }
    n -= block;
    n_a -= block_a;
  }
  return tab;
}

}  // namespace detail

inline LogRankTable log_rank_groups(std::span<const double> times, std::span<const int> events,
                                    const std::vector<char>& in_a) {
  if (times.size() != events.size() || times.size() != in_a.size()) throw InvalidArgument("log_rank: lengths differ");
  return detail::log_rank_table(times, events, in_a, detail::order_by(times));
}

// Two-sample log-rank chi-square (O - E)^2 / V.
inline double log_rank(std::span<const double> times_a, std::span<const int> events_a,
                       std::span<const double> times_b, std::span<const int> events_b) {
  if (times_a.empty() || times_b.empty()) throw InvalidArgument("log_rank: both groups must be non-empty");
  if (times_a.size() != events_a.size() || times_b.size() != events_b.size())
    throw InvalidArgument("log_rank: lengths differ");
  std::vector<double> t(times_a.begin(), times_a.end());
  t.insert(t.end(), times_b.begin(), times_b.end());
  std::vector<int> e(events_a.begin(), events_a.end());
  e.insert(e.end(), events_b.begin(), events_b.end());
  std::vector<char> in_a(t.size(), 0);
  std::fill(in_a.begin(), in_a.begin() + static_cast<std::ptrdiff_t>(times_a.size()), 1);
  return log_rank_groups(t, e, in_a).statistic();
}

inline constexpr double kMinGroupFraction = 0.1;

// Cutoff on the score maximizing the log-rank statistic between the groups
// score > cutoff and score <= cutoff. Candidates are midpoints of adjacent
// distinct scores leaving at least 10% of samples on each side; ties keep the
// smaller cutoff.
inline double select_cutoff(std::span<const double> scores, std::span<const double> times,
                            std::span<const int> events) {
  detail::check_lengths(scores.size(), times.size(), events.size(), "select_cutoff");
  const std::size_t n = scores.size();
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto time_order = detail::order_by(times);
  const double min_group = kMinGroupFraction * static_cast<double>(n);

  std::optional<double> best_cut;
  double best_stat = -1.0;
  std::vector<char> high(n, 0);
  for (std::size_t m = 0; m + 1 < n; ++m) {
    if (!(sorted[m] < sorted[m + 1])) continue;
    const double n_low = static_cast<double>(m + 1);
    const double n_high = static_cast<double>(n - m - 1);
    if (n_low < min_group || n_high < min_group) continue;
    const double cut = 0.5 * (sorted[m] + sorted[m + 1]);
    for (std::size_t i = 0; i < n; ++i) high[i] = scores[i] > cut ? 1 : 0;
    const double stat = detail::log_rank_table(times, events, high, time_order).statistic();
    if (stat > best_stat) {
      best_stat = stat;
      best_cut = cut;
    }
  }
  if (!best_cut) throw InvalidArgument("select_cutoff: no admissible cutoff (need distinct scores)");
  return *best_cut;
}

struct HazardRatio {
  double value = 1.0;
  bool degenerate = false;  // a group had zero observed or expected events
};

// (O_high / E_high) / (O_low / E_low) with log-rank expected counts; the
// high group is score > cutoff.
inline HazardRatio hazard_ratio(std::span<const double> scores, std::span<const double> times,
                                std::span<const int> events, double cutoff) {
  detail::check_lengths(scores.size(), times.size(), events.size(), "hazard_ratio");
  std::vector<char> high(scores.size(), 0);
  std::size_t n_high = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) n_high += (high[i] = scores[i] > cutoff ? 1 : 0);
  if (n_high == 0 || n_high == scores.size()) throw InvalidArgument("hazard_ratio: cutoff leaves a group empty");
  const auto tab = log_rank_groups(times, events, high);
  HazardRatio hr;
  if (tab.expected_a <= 0.0 || tab.expected_b <= 0.0 || tab.observed_a == 0.0 || tab.observed_b == 0.0) {
    hr.degenerate = true;
    if (tab.observed_a == 0.0 && tab.observed_b == 0.0) {
      hr.value = 1.0;
    } else if (tab.observed_b == 0.0 || tab.expected_a <= 0.0) {
      hr.value = std::numeric_limits<double>::infinity();
    } else {
      hr.value = 0.0;
    }
    return hr;
  }
  hr.value = (tab.observed_a / tab.expected_a) / (tab.observed_b / tab.expected_b);
  return hr;
}

}  // namespace triplesurv
