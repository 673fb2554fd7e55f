#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace triplesurv;
using namespace triplesurv::testing;

namespace {

ModelConfig small_config(HeadKind head, int d = 4, int hidden = 8, int blocks = 2, int k = 5) {
  ModelConfig c;
  c.input_dim = d;
  c.hidden_dim = hidden;
  c.n_blocks = blocks;
  c.k_bins = k;
  c.head = head;
  return c;
}

}  // namespace

TEST(Model, ParameterCountClosedForm) {
  // d*h + 2h + B*(h^2 + 2h) + h*out + out
  EXPECT_EQ(parameter_count(init_params(small_config(HeadKind::Cat), 1)), 253u);
  EXPECT_EQ(parameter_count(init_params(small_config(HeadKind::Mtlr), 1)), 244u);
  EXPECT_EQ(parameter_count(init_params(small_config(HeadKind::Cat, 3, 5, 0, 4), 1)), (3u * 5 + 10 + 5 * 4 + 4));
}

TEST(Model, LogitShapeAndInputCheck) {
  for (auto head : {HeadKind::Cat, HeadKind::Mtlr}) {
    const auto p = init_params(small_config(head), 3);
    const Matrix x = Matrix::Random(6, 4);
    EXPECT_EQ(forward_eval(p, x).cols(), head == HeadKind::Cat ? 5 : 4);
    EXPECT_THROW(forward_eval(p, Matrix::Random(6, 3)), InvalidArgument);
  }
  ModelConfig bad = small_config(HeadKind::Cat);
  bad.k_bins = 2;
  EXPECT_THROW(init_params(bad, 0), InvalidArgument);
}

TEST(Model, InitIsSeeded) {
  const auto a = init_params(small_config(HeadKind::Cat), 11);
  const auto b = init_params(small_config(HeadKind::Cat), 11);
  const auto c = init_params(small_config(HeadKind::Cat), 12);
  EXPECT_EQ(a.stem.dense.weight, b.stem.dense.weight);
  EXPECT_NE(a.stem.dense.weight, c.stem.dense.weight);
  const double bound = 1.0 / std::sqrt(4.0);
  EXPECT_LE(a.stem.dense.weight.cwiseAbs().maxCoeff(), bound);
}

TEST(Model, EvalModeIsDeterministicAndRowIndependent) {
  const auto p = init_params(small_config(HeadKind::Cat), 5);
  const Matrix x = Matrix::Random(8, 4);
  const Matrix a = forward_eval(p, x);
  EXPECT_EQ(a, forward_eval(p, x));
  // a single row scores the same alone as inside a batch
  const Matrix one = forward_eval(p, x.topRows(1));
  EXPECT_LT((one - a.topRows(1)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Model, TrainModeRequiresTwoRowsAndUpdatesRunningStats) {
  auto p = init_params(small_config(HeadKind::Cat), 5);
  ForwardCache cache;
  EXPECT_THROW(forward_train(p, Matrix::Random(1, 4), 0, cache), InvalidArgument);
  const Matrix x = Matrix::Random(16, 4).array() + 3.0;
  const RowVector before = p.stem.norm.running_mean;
  forward_train(p, x, 0, cache);
  EXPECT_NE(p.stem.norm.running_mean, before);
  // momentum 0.1 towards the batch mean
  EXPECT_NEAR(p.stem.norm.running_mean(0), 0.9 * before(0) + 0.1 * cache.stem.batch_mean(0), 1e-12);
}

TEST(Model, DropoutMasksDependOnSeedOnly) {
  auto p = init_params(small_config(HeadKind::Cat), 5);
  const Matrix x = Matrix::Random(16, 4);
  ForwardCache c1, c2, c3;
  auto q = p, r = p;
  const Matrix a = forward_train(p, x, 42, c1);
  const Matrix b = forward_train(q, x, 42, c2);
  const Matrix c = forward_train(r, x, 43, c3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Heads, MtlrHandCases) {
  const auto two = mtlr_head(std::vector<double>{0.0});
  EXPECT_NEAR(two[0], 0.5, 1e-12);
  EXPECT_NEAR(two[1], 0.5, 1e-12);
  for (double v : mtlr_head(std::vector<double>{0.0, 0.0})) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  // large positive phi_1 pushes mass to the first bin
  EXPECT_GT(mtlr_head(std::vector<double>{20.0, 0.0})[0], 0.99);
}

TEST(Heads, SoftmaxIsShiftInvariantAndStable) {
  const auto a = cat_head(std::vector<double>{1.0, 2.0, 3.0});
  const auto b = cat_head(std::vector<double>{1001.0, 1002.0, 1003.0});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-15);
  EXPECT_THROW(cat_head(std::vector<double>{0.0, std::nan("")}), NumericalError);
}

TEST(Heads, VectorJacobianProductsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 2.0);
  for (auto head : {HeadKind::Cat, HeadKind::Mtlr}) {
    const std::size_t n_logits = head == HeadKind::Cat ? 6 : 5;
    std::vector<double> logits(n_logits), g(6);
    for (auto& v : logits) v = z(rng);
    for (auto& v : g) v = z(rng);
    const auto pmf = apply_head(head, logits);
    const auto vjp = head_vjp(head, pmf, g);
    for (std::size_t j = 0; j < n_logits; ++j) {
      auto probe = logits;
      const double numeric = central_difference(
          [&](double v) {
            probe[j] = v;
            const auto p = apply_head(head, probe);
            double s = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) s += g[k] * p[k];
            return s;
          },
          logits[j]);
      EXPECT_LT(relative_error(vjp[j], numeric), 1e-5) << to_string(head) << ' ' << j;
    }
  }
}

TEST(Risk, BoundsAndOneHotExtremes) {
  std::vector<double> first(10, 0.0), last(10, 0.0);
  first[0] = 1.0;
  last[9] = 1.0;
  EXPECT_EQ(predict_risk(first, 10), 19.0 / 20.0);
  EXPECT_EQ(predict_risk(last, 10), 1.0 / 20.0);
  EXPECT_THROW(predict_risk(first, 9), InvalidArgument);
}

TEST(Risk, SurvivalIsOneMinusCdf) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  EXPECT_NEAR(predict_survival(p, 1), 0.9, 1e-15);
  EXPECT_NEAR(predict_survival(p, 3), 0.4, 1e-15);
  EXPECT_EQ(predict_survival(p, 4), 0.0);
}

class GradientCheck : public ::testing::TestWithParam<HeadKind> {};

TEST_P(GradientCheck, FullLossAllParameters) {
  std::mt19937_64 rng(17);
  const auto p = init_params(small_config(GetParam()), 23);
  const auto batch = random_batch(rng, 16, 5, 4);
  const auto r = check_param_gradients(p, batch_features(batch), batch, LossWeights{}, 99);
  EXPECT_EQ(r.checked, parameter_count(p));
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST_P(GradientCheck, VerbatimLogProbRank) {
  std::mt19937_64 rng(31);
  const auto p = init_params(small_config(GetParam(), 3, 6, 1, 4), 5);
  const auto batch = random_batch(rng, 12, 4, 3);
  LossWeights w;
  w.likelihood_mode = LikelihoodMode::LogProb;
  w.pairwise_sign = PairwiseSign::Verbatim;
  w.pairwise_kind = PairwiseKind::Rank;
  w.sigma = 0.5;
  EXPECT_LE(check_param_gradients(p, batch_features(batch), batch, w, 3).max_rel_error, 1e-4);
}

TEST_P(GradientCheck, DuplicatedSampleStillMatches) {
  std::mt19937_64 rng(41);
  const auto p = init_params(small_config(GetParam()), 8);
  auto batch = random_batch(rng, 10, 5, 4);
  batch.push_back(batch.front());
  EXPECT_LE(check_param_gradients(p, batch_features(batch), batch, LossWeights{}, 4).max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Heads, GradientCheck, ::testing::Values(HeadKind::Cat, HeadKind::Mtlr),
                         [](const auto& param_info) { return to_string(param_info.param); });

TEST(Checkpoint, RoundTripIsExact) {
  auto p = init_params(small_config(HeadKind::Mtlr), 3);
  ForwardCache cache;
  forward_train(p, Matrix::Random(8, 4), 1, cache);
  std::stringstream s;
  save_checkpoint(s, p);
  const auto q = load_checkpoint(s);
  EXPECT_EQ(q.config.head, HeadKind::Mtlr);
  EXPECT_EQ(q.stem.dense.weight, p.stem.dense.weight);
  EXPECT_EQ(q.blocks[1].norm.running_var, p.blocks[1].norm.running_var);
  EXPECT_EQ(q.head.bias, p.head.bias);
  std::stringstream again;
  save_checkpoint(again, q);
  std::stringstream first;
  save_checkpoint(first, p);
  EXPECT_EQ(first.str(), again.str());
}

TEST(Checkpoint, RejectsCorruption) {
  const auto p = init_params(small_config(HeadKind::Cat), 3);
  std::stringstream s;
  save_checkpoint(s, p);
  std::string text = s.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_checkpoint(truncated), ParseError);
  std::stringstream garbage("not a checkpoint\n");
  EXPECT_THROW(load_checkpoint(garbage), ParseError);
}
