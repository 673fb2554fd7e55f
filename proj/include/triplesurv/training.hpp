#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "triplesurv/checkpoint.hpp"
#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/losses.hpp"
#include "triplesurv/metrics.hpp"
#include "triplesurv/model.hpp"

namespace triplesurv {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double lr_init = 1e-2;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int eval_every = 1;

  void validate() const {
    if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
    if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2");
    if (!(lr_init >= 0.0)) throw InvalidArgument("lr_init must be non-negative");
    if (momentum < 0.0 || weight_decay < 0.0) throw InvalidArgument("momentum and weight_decay must be non-negative");
    if (eval_every < 1) throw InvalidArgument("eval_every must be >= 1");
  }
};

inline double cosine_lr(int epoch, int total_epochs, double lr_init) {
  if (total_epochs <= 0 || epoch < 0 || epoch > total_epochs) throw InvalidArgument("cosine_lr: epoch out of range");
  return lr_init * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs)) / 2.0;
}

// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
// BatchNorm running statistics are not touched.
inline void sgd_step(ModelParams& params, const ParamGrads& grads, double lr, double momentum, double weight_decay,
                     ParamGrads& velocity) {
  visit_trainable(grads, grads, [](const std::string& name, const auto& g, const auto&) {
    if (!g.allFinite()) throw NumericalError("non-finite gradient in " + name);
  });
  visit_trainable(params, velocity, [](const std::string&, const auto& w, const auto& v) {
    if (v.size() != w.size()) throw InvalidArgument("sgd_step: optimizer state shape mismatch");
  });
  // walk params/velocity and grads in lockstep through a flat list
  std::vector<const double*> g_ptrs;
  std::vector<Eigen::Index> g_sizes;
  visit_trainable(grads, grads, [&](const std::string&, const auto& g, const auto&) {
    g_ptrs.push_back(g.data());
    g_sizes.push_back(g.size());
  });
  std::size_t slot = 0;
  visit_trainable(params, velocity, [&](const std::string& name, auto& w, auto& v) {
    if (g_sizes[slot] != w.size()) throw InvalidArgument("sgd_step: gradient shape mismatch in " + name);
    const double* g = g_ptrs[slot++];
    double* wd = w.data();
    double* vd = v.data();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      vd[i] = momentum * vd[i] + g[i] + weight_decay * wd[i];
      wd[i] -= lr * vd[i];
    }
  });
  ++params.update_count;
}

inline void sgd_step(ModelParams& params, const ParamGrads& grads, double lr, double momentum, double weight_decay) {
  ParamGrads velocity = zero_grads(params);
  sgd_step(params, grads, lr, momentum, weight_decay, velocity);
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  double likelihood = 0.0;
  double pairwise = 0.0;
  double calibration = 0.0;
  double val_c_index = std::numeric_limits<double>::quiet_NaN();
  int dropped = 0;  // samples skipped in a trailing size-1 batch
};

struct TrainState {
  ModelParams params;
  ParamGrads velocity;
  int epoch = 0;
  std::vector<EpochRecord> history;
};

// Keeps the first epoch reaching the highest score.
struct ModelSelector {
  double best = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  bool offer(int epoch, double score) {
    if (!(score > best)) return false;
    best = score;
    best_epoch = epoch;
    return true;
  }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

}  // namespace detail

inline TrainState make_train_state(ModelParams params) {
  TrainState s;
  s.velocity = zero_grads(params);
  s.params = std::move(params);
  return s;
}

// One pass over the training set. Minibatch order depends only on
// (seed, epoch); dropout masks on (seed, epoch, batch).
inline EpochRecord train_epoch(TrainState& state, const BinnedDataset& train, const LossWeights& weights,
                               const TrainConfig& config) {
  config.validate();
  const std::size_t n = train.size();
  if (n < 2) throw InvalidArgument("training set needs at least 2 samples");
  const int epoch_index = state.epoch;  // 0-based

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(detail::mix_seed(config.seed, static_cast<std::uint64_t>(epoch_index)));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }

  EpochRecord rec;
  rec.epoch = epoch_index + 1;
  rec.lr = cosine_lr(epoch_index, std::max(config.epochs, epoch_index + 1), config.lr_init);
  const auto& mc = state.params.config;
  int n_batches = 0;
  std::vector<BinnedSample> batch;
  for (std::size_t start = 0, b = 0; start < n; start += static_cast<std::size_t>(config.batch_size), ++b) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
    if (stop - start < 2) {
      rec.dropped += static_cast<int>(stop - start);
      continue;
    }
    batch.clear();
    for (std::size_t q = start; q < stop; ++q) batch.push_back(train.samples[perm[q]]);
    Matrix x(static_cast<Eigen::Index>(batch.size()), mc.input_dim);
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (int j = 0; j < mc.input_dim; ++j) x(static_cast<Eigen::Index>(i), j) = batch[i].features[static_cast<std::size_t>(j)];

    ForwardCache cache;
    const Matrix logits = forward_train(state.params, x, detail::mix_seed(config.seed, static_cast<std::uint64_t>(epoch_index), b + 1), cache);
    const Matrix pmfs = pmf_matrix(mc.head, logits);
    const auto loss = triplesurv_loss(pmfs, batch, weights);
    const Matrix grad_logits = head_vjp_matrix(mc.head, pmfs, loss.grad);
    const ParamGrads grads = backward(state.params, cache, grad_logits);
    sgd_step(state.params, grads, rec.lr, config.momentum, config.weight_decay, state.velocity);

    rec.loss += loss.value;
    rec.likelihood += loss.likelihood;
    rec.pairwise += loss.pairwise;
    rec.calibration += loss.calibration;
    ++n_batches;
  }
  if (n_batches > 0) {
    rec.loss /= n_batches;
    rec.likelihood /= n_batches;
    rec.pairwise /= n_batches;
    rec.calibration /= n_batches;
  }
  if (!std::isfinite(rec.loss)) throw NumericalError("training loss became non-finite at epoch " + std::to_string(rec.epoch));
  ++state.epoch;
  return rec;
}

inline double evaluate_c_index(const ModelParams& params, const BinnedDataset& data) {
  const auto risks = risk_scores(predict_pmfs(params, data.features()));
  return c_index(risks, data.times(), data.events());
}

struct FitResult {
  ModelParams best_params;
  std::vector<EpochRecord> history;
  double best_c_index = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;  // 0 = initial parameters
};

// Trains for config.epochs and keeps the parameters with the highest
// validation C-index (checked every eval_every epochs; ties keep the earlier
// epoch). Both splits must be binned against the same TimeGrid object.
inline FitResult fit(const BinnedDataset& train, const BinnedDataset& val, ModelConfig model_config,
                     const LossWeights& weights, const TrainConfig& config) {
  config.validate();
  weights.validate();
  if (!train.grid || train.grid.get() != val.grid.get()) {
    throw InvalidArgument("fit: training and validation data must share the training TimeGrid");
  }
  if (model_config.input_dim == 0) model_config.input_dim = static_cast<int>(train.n_features());
  if (model_config.k_bins != train.grid->k_bins) throw InvalidArgument("fit: model k_bins differs from the time grid");

  TrainState state = make_train_state(init_params(model_config, config.seed));
  FitResult result;
  result.best_params = state.params;
  if (config.epochs == 0) return result;

  ModelSelector selector;
  for (int e = 0; e < config.epochs; ++e) {
    EpochRecord rec = train_epoch(state, train, weights, config);
    if (rec.epoch % config.eval_every == 0 || rec.epoch == config.epochs) {
      rec.val_c_index = evaluate_c_index(state.params, val);
      if (selector.offer(rec.epoch, rec.val_c_index)) result.best_params = state.params;
    }
    state.history.push_back(rec);
  }
  result.history = std::move(state.history);
  result.best_c_index = selector.best;
  result.best_epoch = selector.best_epoch;
  return result;
}

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,lr,loss,likelihood,pairwise,calibration,val_c_index,dropped\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_real(r.lr) << ',' << format_real(r.loss) << ',' << format_real(r.likelihood) << ','
        << format_real(r.pairwise) << ',' << format_real(r.calibration) << ','
        << (std::isnan(r.val_c_index) ? std::string("nan") : format_real(r.val_c_index)) << ',' << r.dropped << '\n';
  }
}

}  // namespace triplesurv
