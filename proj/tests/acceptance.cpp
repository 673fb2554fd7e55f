// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "test_support.hpp"

using namespace triplesurv;
using namespace triplesurv::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelConfig model_config(HeadKind head, int d, int hidden, int blocks, int k) {
  ModelConfig c;
  c.input_dim = d;
  c.hidden_dim = hidden;
  c.n_blocks = blocks;
  c.k_bins = k;
  c.head = head;
  return c;
}

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  int trial = 0;
  for (auto head : {HeadKind::Cat, HeadKind::Mtlr}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed, ++trial) {
      std::mt19937_64 rng(100 + seed);
      const auto p = init_params(model_config(head, 6, 8, 2, 5), seed);
      const auto batch = random_batch(rng, 16, 5, 6);
      const auto r = check_param_gradients(p, batch_features(batch), batch, LossWeights{}, 1000 + seed, 1e-5);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 60.0,
          fmt("%d random models, %zu parameters, max rel err %.2e, %.1f s", trial, checked, worst, secs)};
}

Outcome pmf_validity() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst_sum = 0.0, min_p = 1.0;
  for (auto head : {HeadKind::Cat, HeadKind::Mtlr}) {
    // through the network
    const auto params = init_params(model_config(head, 5, 16, 2, 10), 3);
    Matrix x(10000, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 * z(rng);
    const Matrix p = predict_pmfs(params, x);
    // and straight through the head with wide logits
    Matrix logits(10000, head == HeadKind::Cat ? 10 : 9);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 30.0 * z(rng);
    const Matrix q = pmf_matrix(head, logits);
    for (const Matrix* m : {&p, &q}) {
      worst_sum = std::max(worst_sum, (m->rowwise().sum().array() - 1.0).abs().maxCoeff());
      min_p = std::min(min_p, m->minCoeff());
    }
  }
  const auto two = mtlr_head(std::vector<double>{0.0});
  const auto three = mtlr_head(std::vector<double>{0.0, 0.0});
  double hand = std::max(std::abs(two[0] - 0.5), std::abs(two[1] - 0.5));
  for (double v : three) hand = std::max(hand, std::abs(v - 1.0 / 3.0));
  return {worst_sum <= 1e-9 && min_p >= 0.0 && hand <= 1e-12,
          fmt("max |sum-1| %.1e, min p %.1e, MTLR hand cases err %.1e", worst_sum, min_p, hand)};
}

Outcome risk_bounds() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> k_dist(3, 30);
  std::exponential_distribution<double> gamma1(1.0);
  std::bernoulli_distribution sparse(0.5);
  int violations = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    const int k = k_dist(rng);
    std::vector<double> p(static_cast<std::size_t>(k));
    double s = 0.0;
    for (auto& v : p) s += (v = sparse(rng) ? 0.0 : gamma1(rng));
    if (s == 0.0) p[0] = s = 1.0;
    for (auto& v : p) v /= s;
    const double r = predict_risk(p, k);
    if (r < 1.0 / (2.0 * k) || r > (2.0 * k - 1.0) / (2.0 * k)) ++violations;
  }
  int inexact = 0;
  for (int k = 3; k <= 50; ++k) {
    std::vector<double> first(static_cast<std::size_t>(k), 0.0), last(static_cast<std::size_t>(k), 0.0);
    first.front() = 1.0;
    last.back() = 1.0;
    if (predict_risk(first, k) != (2.0 * k - 1.0) / (2.0 * k)) ++inexact;
    if (predict_risk(last, k) != 1.0 / (2.0 * k)) ++inexact;
  }
  return {violations == 0 && inexact == 0,
          fmt("10000 random pmfs, %d out of bounds; one-hot extremes K=3..50, %d inexact", violations, inexact)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> n_dist(2, 200);
  int c_mismatch = 0, auc_mismatch = 0, c_instances = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto r = random_survival(rng, static_cast<std::size_t>(n_dist(rng)));
    if (brute_c_counts(r.scores, r.times, r.events).second > 0) {
      ++c_instances;
      if (c_index(r.scores, r.times, r.events) != brute_c_index(r.scores, r.times, r.events)) ++c_mismatch;
    }
    for (double t = 0.5; t <= 30.5; t += 2.5) {
      if (tdauc(r.scores, r.times, r.events, t) != brute_tdauc(r.scores, r.times, r.events, t)) ++auc_mismatch;
    }
  }
  double brier_err = 0.0;
  const auto grid = make_time_grid(1.0, 25.0, 8);
  for (int rep = 0; rep < 100; ++rep) {
    const auto r = random_survival(rng, 150, 0.35, 25);
    const Matrix p = random_pmfs(rng, 150, 8);
    const auto g = kaplan_meier(r.times, r.events, KmTarget::Censoring);
    for (double t_star : {2.0, 6.5, 11.0, 17.5, 23.0}) {
      const int k = bin_at_time(t_star, grid);
      std::vector<double> surv;
      for (Eigen::Index i = 0; i < p.rows(); ++i) surv.push_back(1.0 - p.row(i).head(k).sum());
      BrierDiagnostics diag;
      const double got = brier_score_t(p, r.times, r.events, t_star, g, grid, &diag);
      if (diag.excluded == 0) brier_err = std::max(brier_err, std::abs(got - direct_brier(surv, r.times, r.events, t_star)));
    }
  }
  return {c_mismatch == 0 && auc_mismatch == 0 && brier_err <= 1e-12,
          fmt("c-index %d/%d exact, tdauc mismatches %d, brier max err %.1e", c_instances - c_mismatch, c_instances,
              auc_mismatch, brier_err)};
}

Outcome reference_rows() {
  // uncensored, S-hat = 0.5 at every evaluation time
  std::vector<double> times;
  std::vector<int> events;
  for (int i = 1; i <= 200; ++i) {
    times.push_back(i * 0.5);
    events.push_back(1);
  }
  const auto grid = make_time_grid(0.5, 100.0, 10);
  Matrix p = Matrix::Zero(200, 10);
  p.col(0).setConstant(0.5);
  p.col(9).setConstant(0.5);
  const auto t_grid = default_eval_times(grid);
  bool all_quarter = true;
  for (const auto& [t, b] : brier_curve(p, times, events, t_grid, grid)) all_quarter = all_quarter && b == 0.25;
  const double ibs_value = ibs(p, times, events, t_grid, grid);

  SynthConfig sc;
  sc.n_samples = 10000;
  sc.seed = 4;
  const auto s = generate(sc);
  std::vector<double> t, scores;
  std::vector<int> e;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& x : s.dataset.samples) {
    t.push_back(x.time);
    e.push_back(x.event);
    scores.push_back(u(rng));
  }
  const auto sgrid = make_time_grid(*std::min_element(t.begin(), t.end()), *std::max_element(t.begin(), t.end()), 10);
  const double c = c_index(scores, t, e);
  const double auc = m_tdauc(scores, t, e, default_eval_times(sgrid));
  return {all_quarter && ibs_value == 0.25 && std::abs(c - 0.5) <= 0.02 && std::abs(auc - 0.5) <= 0.02,
          fmt("BS(t*)=0.25 at all %zu times: %s, IBS %.17g; random scores c-index %.4f, mTDAUC %.4f", t_grid.size(),
              all_quarter ? "yes" : "no", ibs_value, c, auc)};
}

Outcome grid_arithmetic() {
  double err = 0.0;
  int bin_errors = 0, cases = 0;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> lo(0.01, 50.0), span(0.1, 1000.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const double a = rep == 0 ? 10.0 : lo(rng);
    const double b = rep == 0 ? 100.0 : a + span(rng);
    const auto g = make_time_grid(a, b, 10);
    const double n_min = normalize_time(a, g), n_max = normalize_time(b, g), n_end = normalize_time(g.t_max_1, g);
    const double n_far = normalize_time(b * 10.0, g);
    err = std::max({err, std::abs(n_min - 0.01), std::abs(n_max - 0.79)});
    if (n_end != 0.9 || n_far != 0.9) err = std::max(err, 1.0);
    bin_errors += assign_bin(n_min, 10) != 1;
    bin_errors += assign_bin(n_max, 10) != 8;
    bin_errors += assign_bin(n_end, 10) != 10;
    bin_errors += assign_bin(n_far, 10) != 10;
    ++cases;
  }
  return {err <= 1e-12 && bin_errors == 0,
          fmt("%d grids: t_min->0.01, t_max->0.79 (max err %.1e), >=T1max->0.9 exact; bins 1/8/10, %d wrong", cases,
              err, bin_errors)};
}

Outcome pair_direction() {
  BinnedSample i, j;
  i.t_norm = 0.25;
  i.bin = assign_bin(0.25, 5);
  i.event = 1;
  j.t_norm = 0.65;
  j.bin = assign_bin(0.65, 5);
  j.event = 0;
  const std::vector<BinnedSample> batch{i, j};
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.5);
  int checks = 0;
  std::map<std::string, int> wrong;
  auto record = [&](const std::string& what, bool increased) {
    ++checks;
    if (!increased) ++wrong[what];
  };
  for (int rep = 0; rep < 200; ++rep) {
    const Matrix p0 = random_pmfs(rng, 2, 5);
    Matrix logits(2, 5);
    for (Eigen::Index q = 0; q < logits.size(); ++q) logits.data()[q] = z(rng);
    for (auto sign : {PairwiseSign::Concordant, PairwiseSign::Verbatim}) {
      for (auto kind : {PairwiseKind::Tapr, PairwiseKind::Rank}) {
        LossWeights w;
        w.alpha = w.gamma = 0.0;
        w.pairwise_sign = sign;
        w.pairwise_kind = kind;
        const std::string tag = to_string(sign) + "/" + to_string(kind);
        // step on the pmf itself
        const auto before = risk_scores(p0);
        const auto after = risk_scores(p0 - 1e-3 * triplesurv_loss(p0, batch, w).grad);
        record(tag + "/pmf", (after[0] - after[1]) > (before[0] - before[1]));
        // step on the logits of each head
        for (auto head : {HeadKind::Cat, HeadKind::Mtlr}) {
          const Matrix x = head == HeadKind::Cat ? logits : Matrix(logits.leftCols(4));
          const Matrix p = pmf_matrix(head, x);
          const auto b2 = risk_scores(p);
          const Matrix gx = head_vjp_matrix(head, p, triplesurv_loss(p, batch, w).grad);
          const auto a2 = risk_scores(pmf_matrix(head, x - 1e-3 * gx));
          record(tag + "/" + to_string(head), (a2[0] - a2[1]) > (b2[0] - b2[1]));
        }
      }
    }
  }
  std::string detail = fmt("%d descent steps (both signs, TAPR and Rank, pmf and logit level)", checks);
  int failures = 0;
  for (const auto& [what, n] : wrong) {
    failures += n;
    detail += fmt("; %s wrong %d", what.c_str(), n);
  }
  if (failures == 0) detail += ", all increase risk_i - risk_j";
  return {failures == 0, detail};
}

struct SynthRun {
  double test_c = 0.0, bayes = 0.0, seconds = 0.0;
};

// Trains with the default configuration on an n=4000 synthetic benchmark and
// scores the held-out split.
SynthRun synthetic_benchmark(std::uint64_t seed, std::optional<LossWeights> weights = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.n_samples = 4000;
  sc.n_features = 10;
  sc.risk_model = RiskModel::Linear;
  sc.target_censor_rate = 0.4;
  sc.seed = seed;
  const auto s = generate(sc);
  const fs::path dir = fs::path(TRIPLESURV_TEST_TMP) / ("synth" + std::to_string(seed));
  fs::create_directories(dir);
  write_synth_csv((dir / "synth.csv").string(), s, seed);

  ExperimentConfig cfg;
  cfg.set("data", (dir / "synth.csv").string());
  cfg.set("seed", std::to_string(seed));
  cfg.set("head", "cat");
  if (weights) cfg.loss = *weights;
  const auto d = prepare_data(cfg);
  const auto o = run_training(cfg, d);

  std::vector<double> oracle;
  for (auto idx : d.indices.test) oracle.push_back(s.oracle_risks[idx]);
  SynthRun r;
  r.bayes = bayes_c_index(oracle, o.test->times(), o.test->events());
  r.test_c = evaluate_c_index(o.fit.best_params, *o.test);
  r.seconds = seconds_since(t0);
  return r;
}

Outcome end_to_end() {
  const auto r = synthetic_benchmark(2024);
  return {r.test_c >= r.bayes - 0.05 && r.seconds < 300.0,
          fmt("held-out c-index %.4f vs bayes %.4f (threshold %.4f), %.1f s", r.test_c, r.bayes, r.bayes - 0.05,
              r.seconds)};
}

Outcome ablation_trend() {
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed : {11, 12, 13}) {
    LossWeights mle;
    mle.beta = mle.gamma = 0.0;
    LossWeights mle_tapr;
    mle_tapr.gamma = 0.0;
    const auto a = synthetic_benchmark(seed, mle);
    const auto b = synthetic_benchmark(seed, mle_tapr);
    ok = ok && b.test_c >= a.test_c - 0.01;
    detail += fmt("%sseed %llu MLE %.4f / MLE+TAPR %.4f", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), a.test_c, b.test_c);
  }
  return {ok, detail};
}

Outcome calibration_optimum() {
  auto mk = [](double t, int k) {
    BinnedSample s;
    s.t_norm = t;
    s.bin = assign_bin(t, k);
    s.event = 1;
    return s;
  };
  // G=2, K=4: half the events before 0.5 and all survivors past 0.5 fail
  const std::vector<BinnedSample> b{mk(0.2, 4), mk(0.3, 4), mk(0.6, 4), mk(0.7, 4)};
  Matrix p = Matrix::Constant(4, 4, 0.25);
  const auto bins = CalibrationBins::equal_width(2);
  const double at_optimum = calibration_loss(p, b, bins).value;
  p.row(2) << 0.1, 0.2, 0.3, 0.4;
  const double perturbed = calibration_loss(p, b, bins).value;
  return {at_optimum == 0.0 && perturbed > 0.0, fmt("at optimum %.17g, after perturbation %.3e", at_optimum, perturbed)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path dir = fs::path(TRIPLESURV_TEST_TMP) / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string("\"") + TRIPLESURV_CLI + "\" " + args + " > /dev/null";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  if (run("synth --n 1000 --seed 3 --out \"" + dir.string() + "\"") != 0) return {false, "synth failed"};
  const std::string base = "train --data \"" + (dir / "synth.csv").string() + "\" --seed 5 --set epochs=20 --out ";
  if (run(base + "\"" + (dir / "a").string() + "\"") != 0 || run(base + "\"" + (dir / "b").string() + "\"") != 0)
    return {false, "train failed"};
  const bool hist = slurp(dir / "a" / kHistoryFile) == slurp(dir / "b" / kHistoryFile);
  const bool ckpt = slurp(dir / "a" / kCheckpointFile) == slurp(dir / "b" / kCheckpointFile);
  return {hist && ckpt, fmt("history %s, checkpoint %s", hist ? "identical" : "DIFFERS", ckpt ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},   {"pmf validity", pmf_validity},
      {"risk bounds", risk_bounds},           {"metric oracles", metric_oracles},
      {"reference rows", reference_rows},     {"time-grid arithmetic", grid_arithmetic},
      {"pair direction", pair_direction},     {"end-to-end synthetic", end_to_end},
      {"ablation trend", ablation_trend},     {"calibration optimum", calibration_optimum},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-22s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
