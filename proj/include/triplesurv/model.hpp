#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/linalg.hpp"

namespace triplesurv {

enum class HeadKind { Cat, Mtlr };

inline std::string to_string(HeadKind h) { return h == HeadKind::Cat ? "cat" : "mtlr"; }

inline HeadKind parse_head(const std::string& s) {
  if (s == "cat") return HeadKind::Cat;
  if (s == "mtlr") return HeadKind::Mtlr;
  throw ConfigError("unknown head '" + s + "' (expected cat or mtlr)");
}

struct ModelConfig {
  int input_dim = 0;
  int hidden_dim = 32;
  int n_blocks = 2;
  double dropout_rate = 0.2;
  HeadKind head = HeadKind::Cat;
  int k_bins = 10;

  // Cat emits one logit per bin; MTLR emits K-1 and pins the last bin.
  int output_dim() const { return head == HeadKind::Cat ? k_bins : k_bins - 1; }

  void validate() const {
    if (input_dim <= 0 || hidden_dim <= 0 || n_blocks < 0) throw InvalidArgument("model dimensions must be positive");
    if (k_bins < 3) throw InvalidArgument("k_bins must be >= 3");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must lie in [0, 1)");
  }
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

struct Dense {
  Matrix weight;   // out x in
  RowVector bias;  // empty when the layer feeds a BatchNorm
};

struct Norm {
  RowVector scale;
  RowVector shift;
  RowVector running_mean;
  RowVector running_var;
};

// Linear -> BatchNorm -> ReLU -> Dropout.
struct Stage {
  Dense dense;
  Norm norm;
};

// Network layout: a stem stage projecting inputs to the hidden width,
// `n_blocks` residual stages (h + stage(h)), then a linear output layer.
struct ModelParams {
  ModelConfig config;
  Stage stem;
  std::vector<Stage> blocks;
  Dense head;
  std::uint64_t update_count = 0;
};

// Gradients share the parameter layout; running statistics stay empty.
struct ParamGrads {
  Stage stem;
  std::vector<Stage> blocks;
  Dense head;
};

// Calls f(name, a_tensor, b_tensor) for every trainable tensor of two
// objects sharing the parameter layout (ModelParams and/or ParamGrads).
template <class A, class B, class F>
void visit_trainable(A& a, B& b, F&& f) {
  auto stage = [&](const std::string& name, auto& sa, auto& sb) {
    f(name + ".weight", sa.dense.weight, sb.dense.weight);
    f(name + ".bn_scale", sa.norm.scale, sb.norm.scale);
    f(name + ".bn_shift", sa.norm.shift, sb.norm.shift);
  };
  stage("stem", a.stem, b.stem);
  for (std::size_t i = 0; i < a.blocks.size(); ++i) stage("block" + std::to_string(i), a.blocks[i], b.blocks[i]);
  f(std::string("head.weight"), a.head.weight, b.head.weight);
  f(std::string("head.bias"), a.head.bias, b.head.bias);
}

inline ParamGrads zero_grads(const ModelParams& p) {
  ParamGrads g;
  auto shape = [](const Stage& s) {
    Stage z;
    z.dense.weight = Matrix::Zero(s.dense.weight.rows(), s.dense.weight.cols());
    z.norm.scale = RowVector::Zero(s.norm.scale.size());
    z.norm.shift = RowVector::Zero(s.norm.shift.size());
    return z;
  };
  g.stem = shape(p.stem);
  for (const auto& b : p.blocks) g.blocks.push_back(shape(b));
  g.head.weight = Matrix::Zero(p.head.weight.rows(), p.head.weight.cols());
  g.head.bias = RowVector::Zero(p.head.bias.size());
  return g;
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  visit_trainable(p, p, [&](const std::string&, const auto& t, const auto&) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto dense = [&](int in, int out, bool with_bias) {
    Dense d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    d.weight.resize(out, in);
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) d.weight(r, c) = u(rng);
    if (with_bias) d.bias = RowVector::Zero(out);
    return d;
  };
  auto stage = [&](int in, int out) {
    Stage s;
    s.dense = dense(in, out, false);
    s.norm.scale = RowVector::Ones(out);
    s.norm.shift = RowVector::Zero(out);
    s.norm.running_mean = RowVector::Zero(out);
    s.norm.running_var = RowVector::Ones(out);
    return s;
  };
  ModelParams p;
  p.config = config;
  p.stem = stage(config.input_dim, config.hidden_dim);
  for (int b = 0; b < config.n_blocks; ++b) p.blocks.push_back(stage(config.hidden_dim, config.hidden_dim));
  p.head = dense(config.hidden_dim, config.output_dim(), true);
  return p;
}

enum class Mode { Train, Eval };

struct StageCache {
  Matrix input;
  Matrix normalized;  // BatchNorm x-hat
  RowVector inv_std;
  RowVector batch_mean;
  RowVector batch_var;  // biased, as used for normalization
  Matrix pre_activation;
  Matrix keep;  // dropout multiplier: 0 or 1/(1-rate)
};

struct ForwardCache {
  StageCache stem;
  std::vector<StageCache> blocks;
  Matrix head_input;
};

namespace detail {

inline Matrix stage_train(Stage& s, const Matrix& x, double rate, std::mt19937_64& rng, StageCache& c) {
  const double n = static_cast<double>(x.rows());
  c.input = x;
  Matrix z = x * s.dense.weight.transpose();
  c.batch_mean = z.colwise().mean();
  Matrix centered = z.rowwise() - c.batch_mean;
  c.batch_var = centered.array().square().colwise().sum() / n;
  c.inv_std = (c.batch_var.array() + kBatchNormEpsilon).rsqrt();
  c.normalized = centered.array().rowwise() * c.inv_std.array();
  c.pre_activation = (c.normalized.array().rowwise() * s.norm.scale.array()).rowwise() + s.norm.shift.array();

  const RowVector unbiased = c.batch_var * (n / (n - 1.0));
  s.norm.running_mean = (1.0 - kBatchNormMomentum) * s.norm.running_mean + kBatchNormMomentum * c.batch_mean;
  s.norm.running_var = (1.0 - kBatchNormMomentum) * s.norm.running_var + kBatchNormMomentum * unbiased;

  c.keep = Matrix::Ones(x.rows(), z.cols());
  if (rate > 0.0) {
    std::bernoulli_distribution drop(rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < c.keep.rows(); ++i)
      for (Eigen::Index j = 0; j < c.keep.cols(); ++j) c.keep(i, j) = drop(rng) ? 0.0 : scale;
  }
  return (c.pre_activation.array().max(0.0) * c.keep.array()).matrix();
}

inline Matrix stage_eval(const Stage& s, const Matrix& x) {
  Matrix z = x * s.dense.weight.transpose();
  const RowVector inv_std = (s.norm.running_var.array() + kBatchNormEpsilon).rsqrt();
  Matrix y = ((z.rowwise() - s.norm.running_mean).array().rowwise() * (inv_std.array() * s.norm.scale.array()))
                 .rowwise() +
             s.norm.shift.array();
  return y.array().max(0.0).matrix();
}

// Returns d(loss)/d(stage input); accumulates parameter grads into g.
inline Matrix stage_backward(const Stage& s, const StageCache& c, const Matrix& d_out, Stage& g) {
  const double n = static_cast<double>(d_out.rows());
  Matrix d_pre = (d_out.array() * c.keep.array() * (c.pre_activation.array() > 0.0).cast<double>()).matrix();
  g.norm.scale += (d_pre.array() * c.normalized.array()).colwise().sum().matrix();
  g.norm.shift += d_pre.colwise().sum();
  Matrix d_hat = d_pre.array().rowwise() * s.norm.scale.array();
  const RowVector sum_d_hat = d_hat.colwise().sum();
  const RowVector sum_d_hat_x = (d_hat.array() * c.normalized.array()).colwise().sum();
  Matrix d_z = ((n * d_hat.array()).rowwise() - sum_d_hat.array() -
                (c.normalized.array().rowwise() * sum_d_hat_x.array()))
                   .rowwise() *
               (c.inv_std.array() / n);
  g.dense.weight += d_z.transpose() * c.input;
  return d_z * s.dense.weight;
}

inline void check_input(const ModelParams& p, const Matrix& x) {
  if (x.cols() != p.config.input_dim) {
    throw InvalidArgument("feature dimension " + std::to_string(x.cols()) + " does not match model input_dim " +
                          std::to_string(p.config.input_dim));
  }
}

}  // namespace detail

// Train-mode forward: batch statistics, dropout, running-stat update.
inline Matrix forward_train(ModelParams& p, const Matrix& x, std::uint64_t seed, ForwardCache& cache) {
  detail::check_input(p, x);
  if (x.rows() < 2) throw InvalidArgument("train-mode forward needs a batch of at least 2 samples");
  std::mt19937_64 rng(seed);
  const double rate = p.config.dropout_rate;
  Matrix h = detail::stage_train(p.stem, x, rate, rng, cache.stem);
  cache.blocks.assign(p.blocks.size(), StageCache{});
  for (std::size_t b = 0; b < p.blocks.size(); ++b) h += detail::stage_train(p.blocks[b], h, rate, rng, cache.blocks[b]);
  cache.head_input = h;
  return (h * p.head.weight.transpose()).rowwise() + p.head.bias;
}

inline Matrix forward_eval(const ModelParams& p, const Matrix& x) {
  detail::check_input(p, x);
  Matrix h = detail::stage_eval(p.stem, x);
  for (const auto& b : p.blocks) h += detail::stage_eval(b, h);
  return (h * p.head.weight.transpose()).rowwise() + p.head.bias;
}

struct ForwardResult {
  Matrix logits;
  std::optional<ForwardCache> cache;
};

inline ForwardResult forward(ModelParams& p, const Matrix& x, Mode mode, std::uint64_t seed) {
  ForwardResult r;
  if (mode == Mode::Eval) {
    r.logits = forward_eval(p, x);
    return r;
  }
  r.cache.emplace();
  r.logits = forward_train(p, x, seed, *r.cache);
  return r;
}

inline ParamGrads backward(const ModelParams& p, const ForwardCache& cache, const Matrix& grad_logits) {
  if (cache.blocks.size() != p.blocks.size() || grad_logits.cols() != p.head.weight.rows() ||
      grad_logits.rows() != cache.head_input.rows()) {
    throw InvalidArgument("backward: cache or gradient shape does not match the parameters");
  }
  ParamGrads g = zero_grads(p);
  g.head.weight = grad_logits.transpose() * cache.head_input;
  g.head.bias = grad_logits.colwise().sum();
  Matrix d_h = grad_logits * p.head.weight;
  for (std::size_t b = p.blocks.size(); b-- > 0;) {
    d_h += detail::stage_backward(p.blocks[b], cache.blocks[b], d_h, g.blocks[b]);
  }
  detail::stage_backward(p.stem, cache.stem, d_h, g.stem);
  return g;
}

// ---- heads ---------------------------------------------------------------

namespace detail {

inline void require_finite(std::span<const double> v, const char* who) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError(std::string(who) + ": non-finite input");
}

inline std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) sum += (p[k] = std::exp(z[k] - m));
  for (auto& x : p) x /= sum;
  return p;
}

// Vector-Jacobian product of softmax: g -> p * (g - <g, p>).
inline std::vector<double> softmax_vjp(std::span<const double> p, std::span<const double> g) {
  double dot = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) dot += g[k] * p[k];
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = p[k] * (g[k] - dot);
  return out;
}

// MTLR scores: s_k = sum_{j>=k} phi_j for k < K, s_K = 0.
inline std::vector<double> mtlr_scores(std::span<const double> phi) {
  std::vector<double> s(phi.size() + 1, 0.0);
  for (std::size_t k = phi.size(); k-- > 0;) s[k] = s[k + 1] + phi[k];
  return s;
}

}  // namespace detail

using Pmf = std::vector<double>;

inline Pmf cat_head(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("cat_head: empty logits");
  detail::require_finite(logits, "cat_head");
  return detail::softmax(logits);
}

inline Pmf mtlr_head(std::span<const double> phi) {
  if (phi.empty()) throw InvalidArgument("mtlr_head: need K-1 >= 1 outputs");
  detail::require_finite(phi, "mtlr_head");
  const auto s = detail::mtlr_scores(phi);
  return detail::softmax(s);
}

// d(loss)/d(logits) given d(loss)/d(pmf).
inline std::vector<double> cat_head_vjp(std::span<const double> pmf, std::span<const double> grad_pmf) {
  return detail::softmax_vjp(pmf, grad_pmf);
}

inline std::vector<double> mtlr_head_vjp(std::span<const double> pmf, std::span<const double> grad_pmf) {
  const auto d_s = detail::softmax_vjp(pmf, grad_pmf);
  // phi_j feeds s_k for every k <= j
  std::vector<double> d_phi(pmf.size() - 1);
  double prefix = 0.0;
  for (std::size_t j = 0; j < d_phi.size(); ++j) d_phi[j] = (prefix += d_s[j]);
  return d_phi;
}

inline Pmf apply_head(HeadKind head, std::span<const double> logits) {
  return head == HeadKind::Cat ? cat_head(logits) : mtlr_head(logits);
}

inline std::vector<double> head_vjp(HeadKind head, std::span<const double> pmf, std::span<const double> grad_pmf) {
  return head == HeadKind::Cat ? cat_head_vjp(pmf, grad_pmf) : mtlr_head_vjp(pmf, grad_pmf);
}

// Row-wise head over a batch of logits; returns an n x K matrix.
inline Matrix pmf_matrix(HeadKind head, const Matrix& logits) {
  const Eigen::Index k = head == HeadKind::Cat ? logits.cols() : logits.cols() + 1;
  Matrix out(logits.rows(), k);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto p = apply_head(head, std::span<const double>(logits.row(i).data(), static_cast<std::size_t>(logits.cols())));
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = p[static_cast<std::size_t>(j)];
  }
  return out;
}

inline Matrix head_vjp_matrix(HeadKind head, const Matrix& pmfs, const Matrix& grad_pmfs) {
  const Eigen::Index out_cols = head == HeadKind::Cat ? pmfs.cols() : pmfs.cols() - 1;
  Matrix out(pmfs.rows(), out_cols);
  const auto k = static_cast<std::size_t>(pmfs.cols());
  for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
    const auto d = head_vjp(head, std::span<const double>(pmfs.row(i).data(), k),
                            std::span<const double>(grad_pmfs.row(i).data(), k));
    for (Eigen::Index j = 0; j < out_cols; ++j) out(i, j) = d[static_cast<std::size_t>(j)];
  }
  return out;
}

// 1 - expected bin midpoint, i.e. sum_k p_k (2K - 2k + 1) / (2K). Lies in
// [1/(2K), (2K-1)/(2K)]; the integer weights are summed first and divided
// once so one-hot pmfs hit the bounds exactly.
inline double predict_risk(std::span<const double> pmf, int k_bins) {
  if (static_cast<int>(pmf.size()) != k_bins) throw InvalidArgument("predict_risk: pmf length differs from K");
  double weighted = 0.0;
  for (int k = 1; k <= k_bins; ++k) weighted += pmf[static_cast<std::size_t>(k - 1)] * (2.0 * (k_bins - k) + 1.0);
  // round-off in sum(p) = 1 must not leave the bounds
  weighted = std::clamp(weighted, 1.0, 2.0 * k_bins - 1.0);
  return weighted / (2.0 * k_bins);
}

inline double predict_risk(std::span<const double> pmf, const TimeGrid& grid) { return predict_risk(pmf, grid.k_bins); }

// Probability of surviving past bin k.
inline double predict_survival(std::span<const double> pmf, int k) {
  if (k < 1 || k > static_cast<int>(pmf.size())) throw InvalidArgument("predict_survival: bin index out of range");
  double cdf = 0.0;
  for (int i = 0; i < k; ++i) cdf += pmf[static_cast<std::size_t>(i)];
  return std::clamp(1.0 - cdf, 0.0, 1.0);
}

inline std::vector<double> risk_scores(const Matrix& pmfs) {
  std::vector<double> r(static_cast<std::size_t>(pmfs.rows()));
  const int k = static_cast<int>(pmfs.cols());
  for (Eigen::Index i = 0; i < pmfs.rows(); ++i)
    r[static_cast<std::size_t>(i)] = predict_risk(std::span<const double>(pmfs.row(i).data(), static_cast<std::size_t>(k)), k);
  return r;
}

// Eval-mode pmfs for a whole feature matrix.
inline Matrix predict_pmfs(const ModelParams& p, const Matrix& x) { return pmf_matrix(p.config.head, forward_eval(p, x)); }

}  // namespace triplesurv
