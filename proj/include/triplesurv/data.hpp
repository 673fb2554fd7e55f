#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "triplesurv/error.hpp"
#include "triplesurv/linalg.hpp"

namespace triplesurv {

struct Sample {
  std::vector<double> features;
  double time = 0.0;  // raw units, > 0
  int event = 0;      // 1 = observed, 0 = right-censored
};

// Discretization of study time into K bins.
//
// Event times [t_min, t_max] are stretched so that t_min sits 0.1 bin widths
// above the origin and t_max sits 0.1 bin widths below the end of bin K-2.
// Bin K-1 is a margin and bin K is reserved for censorings beyond the last
// observed event.
struct TimeGrid {
  int k_bins = 0;
  double t_min = 0.0;
  double t_max = 0.0;
  double delta_t = 0.0;
  double t_min_prime = 0.0;
  double t_max_1 = 0.0;
  double t_max_2 = 0.0;
};

inline double crop(double x, double a, double b) {
  if (a > b) throw InvalidArgument("crop: lower bound exceeds upper bound");
  if (x < a) return a;
  if (x > b) return b;
  return x;
}

inline TimeGrid make_time_grid(double t_min, double t_max, int k_bins) {
  if (k_bins < 3) throw InvalidArgument("time grid needs k_bins >= 3, got " + std::to_string(k_bins));
  if (!(std::isfinite(t_min) && std::isfinite(t_max)) || !(t_max > t_min)) {
    throw DegenerateGrid("time grid needs two distinct finite event times");
  }
  TimeGrid g;
  g.k_bins = k_bins;
  g.t_min = t_min;
  g.t_max = t_max;
  g.delta_t = (t_max - t_min) / (k_bins - 2.2);
  g.t_min_prime = t_min - 0.1 * g.delta_t;
  g.t_max_1 = g.t_min_prime + (k_bins - 1) * g.delta_t;
  g.t_max_2 = g.t_min_prime + k_bins * g.delta_t;
  return g;
}

// Maps a raw time into [0, (K-1)/K].
inline double normalize_time(double t, const TimeGrid& grid) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("normalize_time: time must be finite and positive");
  // Everything cropped to T1max shares the reserved last bin; return its
  // lower edge exactly so the bin lookup cannot slip into bin K-1.
  if (t >= grid.t_max_1) return static_cast<double>(grid.k_bins - 1) / grid.k_bins;
  const double cropped = crop(t, grid.t_min_prime, grid.t_max_1);
  return (cropped - grid.t_min_prime) / (grid.t_max_2 - grid.t_min_prime);
}

// 1-based bin k with (k-1)/K <= t_norm < k/K. Boundaries are compared as the
// doubles k/K so that values produced as exact fractions land where expected.
inline int assign_bin(double t_norm, int k_bins) {
  if (k_bins < 1) throw InvalidArgument("assign_bin: k_bins must be positive");
  if (!(t_norm >= 0.0 && t_norm < 1.0)) {
    throw InvalidArgument("assign_bin: normalized time outside [0, 1)");
  }
  const double kd = static_cast<double>(k_bins);
  int k = static_cast<int>(std::floor(t_norm * kd));
  k = std::clamp(k, 0, k_bins - 1);
  while (k + 1 < k_bins && t_norm >= static_cast<double>(k + 1) / kd) ++k;
  while (k > 0 && t_norm < static_cast<double>(k) / kd) --k;
  return k + 1;
}

inline double bin_midpoint(int k, int k_bins) {
  if (k < 1 || k > k_bins) throw InvalidArgument("bin_midpoint: bin index out of range");
  return (2.0 * k - 1.0) / (2.0 * k_bins);
}

// Lower edge of bin k in raw time units (inverse of the normalization).
inline double bin_lower_edge_time(int k, const TimeGrid& grid) {
  return grid.t_min_prime + (k - 1) * grid.delta_t;
}

// Per-feature z-score statistics.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // sqrt(max(var, variance_floor))

  static constexpr double variance_floor = 1e-8;

  static Standardizer fit(const std::vector<std::vector<double>>& rows, std::size_t dim) {
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    if (rows.empty()) return s;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t j = 0; j < dim; ++j) s.mean[j] += r[j];
    for (auto& m : s.mean) m /= n;
    std::vector<double> var(dim, 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < dim; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (std::size_t j = 0; j < dim; ++j) s.scale[j] = std::sqrt(std::max(var[j] / n, variance_floor));
    return s;
  }

  void apply(std::vector<double>& row) const {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
  }
};

struct SurvivalDataset {
  std::vector<Sample> samples;
  std::vector<std::string> feature_names;
  Standardizer standardizer;
  std::shared_ptr<const TimeGrid> grid;

  std::size_t size() const { return samples.size(); }
  std::size_t n_features() const { return feature_names.size(); }
};

// A raw CSV: header plus string cells, kept verbatim so splits can be
// written back out without any re-formatting of numbers.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> lines;  // original text of each data row
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::optional<double> parse_double(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  // strtod rather than stod: denormals are valid input, not range errors
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      // tolerate a UTF-8 byte order mark
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      for (auto& c : detail::split_csv_line(line)) table.header.push_back(detail::trim(c));
      have_header = true;
      continue;
    }
    if (detail::trim(line).empty()) continue;
    table.rows.push_back(detail::split_csv_line(line));
    table.lines.push_back(line);
  }
  if (!have_header) throw ParseError("CSV file '" + path + "' is empty");
  return table;
}

inline void write_csv_subset(const std::string& path, const CsvTable& table, const std::vector<std::size_t>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (std::size_t j = 0; j < table.header.size(); ++j) out << (j ? "," : "") << table.header[j];
  out << '\n';
  for (auto r : rows) out << table.lines.at(r) << '\n';
}

// Converts a parsed table into samples. When `reuse` is empty the feature
// statistics are estimated from this table, otherwise the given ones apply.
inline SurvivalDataset dataset_from_table(const CsvTable& table, const std::string& time_column,
                                          const std::string& event_column,
                                          const std::optional<Standardizer>& reuse = std::nullopt) {
  const auto find_column = [&](const std::string& name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw ParseError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t time_idx = find_column(time_column);
  const std::size_t event_idx = find_column(event_column);
  if (time_idx == event_idx) throw ParseError("time and event columns must differ");

  SurvivalDataset ds;
  std::vector<std::size_t> feature_idx;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == time_idx || j == event_idx) continue;
    feature_idx.push_back(j);
    ds.feature_names.push_back(table.header[j]);
  }

  std::vector<std::vector<double>> raw;
  raw.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t row_no = r + 1;
    if (cells.size() != table.header.size()) {
      throw ParseError("expected " + std::to_string(table.header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row_no);
    }
    const auto number = [&](std::size_t col) {
      auto v = detail::parse_double(cells[col]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("non-numeric value '" + cells[col] + "' in column '" + table.header[col] + "'", row_no);
      }
      return *v;
    };
    Sample s;
    s.time = number(time_idx);
    if (!(s.time > 0.0)) throw ParseError("time must be positive", row_no);
    const double ev = number(event_idx);
    if (ev != 0.0 && ev != 1.0) throw ParseError("event indicator must be 0 or 1", row_no);
    s.event = static_cast<int>(ev);
    s.features.reserve(feature_idx.size());
    for (auto j : feature_idx) s.features.push_back(number(j));
    raw.push_back(s.features);
    ds.samples.push_back(std::move(s));
  }

  if (reuse) {
    if (reuse->mean.size() != feature_idx.size()) {
      throw InvalidArgument("stored feature statistics have " + std::to_string(reuse->mean.size()) +
                            " features, file has " + std::to_string(feature_idx.size()));
    }
    ds.standardizer = *reuse;
  } else {
    ds.standardizer = Standardizer::fit(raw, feature_idx.size());
  }
  for (auto& s : ds.samples) ds.standardizer.apply(s.features);
  return ds;
}

inline SurvivalDataset load_csv(const std::string& path, const std::string& time_column,
                                const std::string& event_column,
                                const std::optional<Standardizer>& reuse = std::nullopt) {
  return dataset_from_table(read_csv_table(path), time_column, event_column, reuse);
}

inline TimeGrid build_time_grid(const SurvivalDataset& dataset, int k_bins) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& s : dataset.samples) {
    if (s.event != 1) continue;
    if (!any) {
      lo = hi = s.time;
      any = true;
    }
    lo = std::min(lo, s.time);
    hi = std::max(hi, s.time);
  }
  if (!any || !(hi > lo)) throw DegenerateGrid("time grid needs at least two distinct event times");
  return make_time_grid(lo, hi, k_bins);
}

// Partition sizes by largest remainder; ties go to the earlier partition.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw InvalidArgument("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split ratios must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * ratios[i];
    // guard against 0.6 * 5 = 2.9999999999999996 style round-off
    const double whole = std::floor(exact + 1e-9);
    sizes[i] = static_cast<std::size_t>(whole);
    remainder[i] = exact - whole;
    assigned += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) sizes[order[i % 3]] += 1;
  return sizes;
}

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

// Seeded Fisher-Yates shuffle followed by contiguous cuts.
inline SplitIndices split_indices(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed) {
  const auto sizes = split_sizes(n, ratios);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + sizes[0]);
  out.validation.assign(perm.begin() + sizes[0], perm.begin() + sizes[0] + sizes[1]);
  out.test.assign(perm.begin() + sizes[0] + sizes[1], perm.end());
  return out;
}

inline SurvivalDataset subset(const SurvivalDataset& ds, const std::vector<std::size_t>& idx) {
  SurvivalDataset out;
  out.feature_names = ds.feature_names;
  out.standardizer = ds.standardizer;
  out.grid = ds.grid;
  out.samples.reserve(idx.size());
  for (auto i : idx) out.samples.push_back(ds.samples.at(i));
  return out;
}

struct DatasetSplit {
  SurvivalDataset train, validation, test;
};

inline DatasetSplit split_dataset(const SurvivalDataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed) {
  const auto idx = split_indices(ds.size(), ratios, seed);
  return {subset(ds, idx.train), subset(ds, idx.validation), subset(ds, idx.test)};
}

struct BinnedSample {
  std::vector<double> features;
  double time = 0.0;    // raw time, kept for metrics
  double t_norm = 0.0;  // normalized time in [0, 1)
  int bin = 1;          // 1-based
  int event = 0;
};

struct BinnedDataset {
  std::vector<BinnedSample> samples;
  std::shared_ptr<const TimeGrid> grid;

  std::size_t size() const { return samples.size(); }
  std::size_t n_features() const { return samples.empty() ? 0 : samples.front().features.size(); }

  Matrix features() const {
    Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(n_features()));
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t j = 0; j < samples[i].features.size(); ++j)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i].features[j];
    return x;
  }
  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(samples.size());
    for (const auto& s : samples) t.push_back(s.time);
    return t;
  }
  std::vector<int> events() const {
    std::vector<int> e;
    e.reserve(samples.size());
    for (const auto& s : samples) e.push_back(s.event);
    return e;
  }
};

inline BinnedSample bin_sample(const Sample& s, const TimeGrid& grid) {
  BinnedSample b;
  b.features = s.features;
  b.time = s.time;
  b.event = s.event;
  b.t_norm = normalize_time(s.time, grid);
  b.bin = assign_bin(b.t_norm, grid.k_bins);
  return b;
}

// Normalizes every sample against `grid`. The grid object is shared, so
// splits binned against the same training grid compare equal by address.
inline BinnedDataset bin_dataset(const SurvivalDataset& ds, std::shared_ptr<const TimeGrid> grid) {
  if (!grid) throw InvalidArgument("bin_dataset: no time grid");
  BinnedDataset out;
  out.grid = std::move(grid);
  out.samples.reserve(ds.size());
  for (const auto& s : ds.samples) out.samples.push_back(bin_sample(s, *out.grid));
  return out;
}

}  // namespace triplesurv
