#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace triplesurv;

TEST(Synth, SeededAndReproducible) {
  SynthConfig c;
  c.n_samples = 200;
  c.seed = 5;
  const auto a = generate(c);
  const auto b = generate(c);
  c.seed = 6;
  const auto d = generate(c);
  EXPECT_EQ(a.oracle_risks, b.oracle_risks);
  EXPECT_EQ(a.dataset.samples[7].time, b.dataset.samples[7].time);
  EXPECT_NE(a.oracle_risks, d.oracle_risks);
}

TEST(Synth, CensoringRateWithinTolerance) {
  for (double target : {0.0, 0.2, 0.4, 0.6}) {
    SynthConfig c;
    c.n_samples = 2000;
    c.target_censor_rate = target;
    c.seed = 3;
    const auto s = generate(c);
    EXPECT_NEAR(s.censor_rate, target, c.censor_tolerance) << target;
    for (const auto& x : s.dataset.samples) EXPECT_GT(x.time, 0.0);
  }
}

TEST(Synth, BayesConcordanceIsInformative) {
  SynthConfig c;
  c.n_samples = 3000;
  c.seed = 1;
  const auto s = generate(c);
  std::vector<double> t;
  std::vector<int> e;
  for (const auto& x : s.dataset.samples) {
    t.push_back(x.time);
    e.push_back(x.event);
  }
  const double bayes = bayes_c_index(s.oracle_risks, t, e);
  EXPECT_GT(bayes, 0.65);
  EXPECT_LT(bayes, 0.9);
  // the negated oracle is exactly the mirror image
  std::vector<double> neg;
  for (double r : s.oracle_risks) neg.push_back(-r);
  EXPECT_NEAR(c_index(neg, t, e), 1.0 - bayes, 1e-12);
}

TEST(Synth, QuadraticModelAndExponentialBaseline) {
  SynthConfig c;
  c.n_samples = 500;
  c.n_features = 5;
  c.risk_model = RiskModel::Quadratic;
  c.baseline = BaselineKind::Exponential;
  const auto s = generate(c);
  EXPECT_EQ(s.dataset.size(), 500u);
  EXPECT_EQ(s.dataset.n_features(), 5u);
}

TEST(Synth, RejectsBadConfig) {
  SynthConfig c;
  c.target_censor_rate = 1.0;
  EXPECT_THROW(generate(c), InvalidArgument);
  c = SynthConfig{};
  c.n_samples = 0;
  EXPECT_THROW(generate(c), InvalidArgument);
}

TEST(Synth, CsvRoundTripThroughLoader) {
  SynthConfig c;
  c.n_samples = 50;
  c.n_features = 3;
  c.seed = 12;
  const auto s = generate(c);
  std::filesystem::create_directories(TRIPLESURV_TEST_TMP);
  const std::string path = std::string(TRIPLESURV_TEST_TMP) + "/synth_roundtrip.csv";
  write_synth_csv(path, s, 12);
  const auto table = read_csv_table(path);
  EXPECT_EQ(table.header, (std::vector<std::string>{"x1", "x2", "x3", "time", "event"}));
  const auto ds = load_csv(path, "time", "event");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.samples[i].time, s.dataset.samples[i].time);
    EXPECT_EQ(ds.samples[i].event, s.dataset.samples[i].event);
  }
  std::ifstream side(path + ".oracle.csv");
  std::string header, first;
  std::getline(side, header);
  std::getline(side, first);
  EXPECT_EQ(header, "row,oracle_risk,seed");
  EXPECT_EQ(first, "1," + format_real(s.oracle_risks[0]) + ",12");
}
