// tests/test_hmm.cpp

// Copyright 2026  The emoverify Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <sstream>

#include "emoverify/hmm.hpp"
#include "oracles.hpp"

namespace emoverify::hmm {
namespace {

HmmModel single_gaussian(std::vector<double> mu, std::vector<double> var) {
  HmmModel m;
  m.transitions = Matrix(1, 1, 1.0);
  GmmEmission g;
  g.weights = {1.0};
  g.means = Matrix(1, mu.size(), mu);
  g.variances = Matrix(1, var.size(), var);
  m.states.push_back(g);
  return m;
}

bool has_error(const std::vector<std::string> &errors, const std::string &needle) {
  for (const auto &e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

TEST(HmmValidate, AcceptsBakisModel) {
  std::mt19937_64 gen(1);
  EXPECT_TRUE(validate(oracle::random_model(gen, 6, 3, 4)).empty());
}

TEST(HmmValidate, RejectsSkipTransition) {
  std::mt19937_64 gen(2);
  HmmModel m = oracle::random_model(gen, 6, 1, 2);
  m.transitions(0, 2) = 0.1;
  m.transitions(0, 0) -= 0.1;
  EXPECT_TRUE(has_error(validate(m), "non-Bakis transition (1→3)"));
}

TEST(HmmValidate, RejectsBadWeights) {
  std::mt19937_64 gen(3);
  HmmModel m = oracle::random_model(gen, 2, 2, 1);
  m.states[0].weights = {0.5, 0.6};
  EXPECT_TRUE(has_error(validate(m), "weights sum 1.1"));
}

TEST(HmmValidate, RejectsFlooredVarianceAndRowSum) {
  std::mt19937_64 gen(4);
  HmmModel m = oracle::random_model(gen, 3, 1, 2);
  m.states[1].variances(0, 1) = 1e-6;
  m.transitions(1, 1) += 0.25;
  const auto errors = validate(m);
  EXPECT_TRUE(has_error(errors, "below floor"));
  EXPECT_TRUE(has_error(errors, "transition row 2 sums"));
}

TEST(HmmForward, SingleGaussianIsSumOfFrameDensities) {
  const HmmModel m = single_gaussian({0.5, -1.0}, {2.0, 0.5});
  const Matrix obs(3, 2, std::vector<double>{0.1, 0.2, -0.3, 1.0, 2.0, -2.0});
  double expected = 0.0;
  for (std::size_t t = 0; t < 3; ++t)
    expected += static_cast<double>(oracle::gaussian_log_density(
        {obs(t, 0), obs(t, 1)}, m.states[0].means.row(0), m.states[0].variances.row(0)));
  EXPECT_NEAR(log_forward(m, obs), expected, 1e-12);
  EXPECT_NEAR(avg_frame_ll(m, obs), expected / 3.0, 1e-12);
}

TEST(HmmForward, TwoStateThreeFramesMatchesPathEnumeration) {
  std::mt19937_64 gen(5);
  const HmmModel m = oracle::random_model(gen, 2, 2, 3);
  const Matrix obs = oracle::random_observations(gen, 3, 3);
  EXPECT_NEAR(log_forward(m, obs),
              static_cast<double>(oracle::brute_force_log_forward(m, obs)), 1e-9);
}

TEST(HmmForward, TinyDensitiesStayFinite) {
  std::mt19937_64 gen(6);
  const HmmModel m = oracle::random_model(gen, 3, 2, 2);
  // Frames ~37 units away from every mean: per-frame densities near e^-700.
  const Matrix obs = oracle::random_observations(gen, 6, 2, 37.0);
  const double got = log_forward(m, obs);
  ASSERT_TRUE(std::isfinite(got));
  EXPECT_LT(got, -3000.0);
  const long double want = oracle::brute_force_log_forward(m, obs);
  EXPECT_NEAR(got, static_cast<double>(want), 1e-9 * std::abs(static_cast<double>(want)));
}

TEST(HmmForward, RejectsEmptyAndMismatchedObservations) {
  const HmmModel m = single_gaussian({0.0}, {1.0});
  EXPECT_THROW(log_forward(m, Matrix(0, 1)), ValidationError);
  EXPECT_THROW(log_forward(m, Matrix(2, 3)), ValidationError);
  EXPECT_THROW(viterbi(m, Matrix(0, 1)), ValidationError);
}

TEST(HmmForward, RandomizedAgreementWithPathSum) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + trial % 3, len = 1 + trial % 6;
    const HmmModel m = oracle::random_model(gen, n, 1 + trial % 2, 2);
    const Matrix obs = oracle::random_observations(gen, len, 2);
    ASSERT_NEAR(log_forward(m, obs), static_cast<double>(oracle::brute_force_log_forward(m, obs)),
                1e-9);
  }
}

TEST(HmmForward, TranslationInvariance) {
  std::mt19937_64 gen(8);
  HmmModel m = oracle::random_model(gen, 3, 2, 2);
  Matrix obs = oracle::random_observations(gen, 5, 2);
  const double before = log_forward(m, obs);
  const double shift[2] = {3.25, -1.5};
  for (auto &g : m.states)
    for (std::size_t k = 0; k < g.num_components(); ++k)
      for (std::size_t d = 0; d < 2; ++d) g.means(k, d) += shift[d];
  for (std::size_t t = 0; t < obs.rows(); ++t)
    for (std::size_t d = 0; d < 2; ++d) obs(t, d) += shift[d];
  EXPECT_NEAR(log_forward(m, obs), before, 1e-9);
}

TEST(HmmViterbi, SingleStateEqualsForward) {
  const HmmModel m = single_gaussian({0.0}, {1.0});
  const Matrix obs(4, 1, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  const auto v = viterbi(m, obs);
  EXPECT_EQ(v.path, std::vector<std::size_t>(4, 0));
  EXPECT_DOUBLE_EQ(v.log_prob, log_forward(m, obs));
}

TEST(HmmViterbi, TwoStateThreeFramesMatchesEnumeration) {
  std::mt19937_64 gen(9);
  const HmmModel m = oracle::random_model(gen, 2, 1, 2);
  const Matrix obs = oracle::random_observations(gen, 3, 2);
  const auto v = viterbi(m, obs);
  const auto best = oracle::brute_force_viterbi(m, obs);
  EXPECT_EQ(v.path, best.path);
  EXPECT_NEAR(v.log_prob, static_cast<double>(best.log_prob), 1e-9);
}

TEST(HmmViterbi, TiesPickLexicographicallySmallestPath) {
  HmmModel m = single_gaussian({0.0}, {1.0});
  m.states.push_back(m.states[0]);
  m.transitions = Matrix(2, 2, std::vector<double>{0.5, 0.5, 0.0, 1.0});
  // Paths (1,1) and (1,2) both score log 0.5 + identical emissions.
  const auto v = viterbi(m, Matrix(2, 1, std::vector<double>{0.3, 0.3}));
  EXPECT_EQ(v.path, (std::vector<std::size_t>{0, 0}));
}

TEST(HmmViterbi, PathBoundsAgainstForward) {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 4, len = 2 + trial % 9;
    const HmmModel m = oracle::random_model(gen, n, 2, 3);
    const Matrix obs = oracle::random_observations(gen, len, 3);
    const auto v = viterbi(m, obs);
    const double fwd = log_forward(m, obs);
    EXPECT_LE(v.log_prob, fwd + 1e-12);
    EXPECT_LE(fwd, v.log_prob + static_cast<double>(len) * std::log(static_cast<double>(n)) + 1e-9);
    EXPECT_TRUE(std::is_sorted(v.path.begin(), v.path.end()));
  }
}

TEST(HmmAvgFrame, DividesByLength) {
  const HmmModel m = single_gaussian({0.0}, {1.0});
  const Matrix one(1, 1, std::vector<double>{0.7});
  EXPECT_DOUBLE_EQ(avg_frame_ll(m, one), log_forward(m, one));
  EXPECT_DOUBLE_EQ(-230.2 / 100.0, -2.302);
}

TEST(HmmAvgFrame, DuplicatedStationarySequenceKeepsAverage) {
  const HmmModel m = single_gaussian({1.0, 2.0}, {0.5, 3.0});
  std::mt19937_64 gen(11);
  const Matrix obs = oracle::random_observations(gen, 50, 2);
  Matrix doubled = obs;
  for (std::size_t t = 0; t < obs.rows(); ++t) doubled.append_row(obs.row(t));
  EXPECT_NEAR(avg_frame_ll(m, doubled), avg_frame_ll(m, obs), 1e-9);
}

TEST(HmmTrain, SingleGaussianClosedForm) {
  const HmmModel init = single_gaussian({0.0, 0.0}, {1.0, 1.0});
  const std::vector<Matrix> data = {
      Matrix(3, 2, std::vector<double>{1.0, 5.0, 2.0, 5.0, 3.0, 5.0}),
      Matrix(1, 2, std::vector<double>{6.0, 5.0})};
  TrainConfig cfg;
  cfg.max_iterations = 1;
  const auto result = train_baum_welch(init, data, cfg);
  const auto &g = result.model.states[0];
  EXPECT_NEAR(g.means(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(g.means(0, 1), 5.0, 1e-12);
  EXPECT_NEAR(g.variances(0, 0), 3.5, 1e-12);  // population variance of {1,2,3,6}
  EXPECT_DOUBLE_EQ(g.variances(0, 1), cfg.variance_floor);
}

TEST(HmmTrain, MonotoneFromTruthOnSampledData) {
  std::mt19937_64 gen(12);
  HmmModel truth = oracle::random_model(gen, 4, 2, 3);
  std::vector<Matrix> data;
  for (int u = 0; u < 12; ++u) data.push_back(sample_sequence(truth, 40, 100 + u));
  TrainConfig cfg;
  cfg.convergence_delta = 1e-12;
  const auto result = train_baum_welch(truth, data, cfg);
  for (std::size_t i = 1; i < result.log_likelihoods.size(); ++i)
    EXPECT_GE(result.log_likelihoods[i], result.log_likelihoods[i - 1] - 1e-6) << i;
  EXPECT_TRUE(validate(result.model).empty());
}

TEST(HmmTrain, AccumulationOrderIsCanonical) {
  std::mt19937_64 gen(13);
  const HmmModel truth = oracle::random_model(gen, 3, 2, 2);
  const Matrix a = sample_sequence(truth, 25, 1), b = sample_sequence(truth, 30, 2);
  TrainConfig cfg;
  cfg.max_iterations = 5;
  const auto init = init_model(std::vector<Matrix>{a, b}, 3, 2, 2, cfg);
  const auto init_swapped = init_model(std::vector<Matrix>{b, a}, 3, 2, 2, cfg);
  EXPECT_EQ(init, init_swapped);
  const auto ab = train_baum_welch(init, std::vector<Matrix>{a, b}, cfg);
  const auto ba = train_baum_welch(init, std::vector<Matrix>{b, a}, cfg);
  EXPECT_EQ(ab.model, ba.model);
  EXPECT_EQ(ab.log_likelihoods, ba.log_likelihoods);
}

TEST(HmmTrain, RejectsEmptyAndMismatchedData) {
  const HmmModel init = single_gaussian({0.0}, {1.0});
  EXPECT_THROW(train_baum_welch(init, std::vector<Matrix>{}, TrainConfig{}), ValidationError);
  EXPECT_THROW(train_baum_welch(init, std::vector<Matrix>{Matrix(3, 2)}, TrainConfig{}),
               ValidationError);
}

TEST(HmmInit, ValidAndDeterministic) {
  std::mt19937_64 gen(14);
  std::vector<Matrix> data;
  for (int u = 0; u < 4; ++u) data.push_back(oracle::random_observations(gen, 30 + u, 3));
  TrainConfig cfg;
  cfg.seed = 99;
  const auto a = init_model(data, 6, 3, 3, cfg);
  EXPECT_TRUE(validate(a).empty());
  EXPECT_EQ(a, init_model(data, 6, 3, 3, cfg));
  EXPECT_EQ(a.transitions(0, 0), 0.5);
  EXPECT_EQ(a.transitions(0, 1), 0.5);
  EXPECT_EQ(a.transitions(5, 5), 1.0);
}

TEST(HmmInit, LowersMixtureCountForShortSegments) {
  const std::vector<Matrix> data = {Matrix(4, 1, std::vector<double>{0, 1, 2, 3})};
  const auto m = init_model(data, 2, 5, 1, TrainConfig{});
  EXPECT_EQ(m.num_mixtures(), 2u);
  EXPECT_TRUE(validate(m).empty());
}

TEST(HmmInit, KMeansRecoversSeparatedClusters) {
  // Two Gaussians 10 units apart; centers must land within 1 unit of truth.
  Rng rng(15);
  std::vector<Matrix> data;
  for (int u = 0; u < 10; ++u) {
    Matrix utt(40, 2);
    for (std::size_t t = 0; t < 40; ++t) {
      const double c = (t % 2 == 0) ? -5.0 : 5.0;
      utt(t, 0) = c + 0.3 * rng.normal();
      utt(t, 1) = 1.0 + 0.3 * rng.normal();
    }
    data.push_back(utt);
  }
  TrainConfig cfg;
  cfg.seed = 3;
  const auto m = init_model(data, 1, 2, 2, cfg);
  std::vector<double> centers = {m.states[0].means(0, 0), m.states[0].means(1, 0)};
  std::sort(centers.begin(), centers.end());
  EXPECT_NEAR(centers[0], -5.0, 1.0);
  EXPECT_NEAR(centers[1], 5.0, 1.0);
  EXPECT_NEAR(m.states[0].means(0, 1), 1.0, 1.0);
}

TEST(HmmSample, ConcentratesAtMeanWithFlooredVariance) {
  const HmmModel m = single_gaussian({2.0, -3.0}, {kDefaultVarianceFloor, kDefaultVarianceFloor});
  const Matrix frames = sample_sequence(m, 10000, 77);
  const double bound = 4.0 * std::sqrt(kDefaultVarianceFloor);
  std::size_t outside = 0;
  for (std::size_t t = 0; t < frames.rows(); ++t)
    if (std::abs(frames(t, 0) - 2.0) > bound || std::abs(frames(t, 1) + 3.0) > bound) ++outside;
  // P(|z| > 4) = 6.3e-5 per coordinate; expected ~1.3 exceedances over 20k draws.
  EXPECT_LE(outside, 8u);
}

TEST(HmmSample, DeterministicAndForcedPath) {
  std::mt19937_64 gen(16);
  HmmModel m = oracle::random_model(gen, 5, 2, 2);
  EXPECT_EQ(sample_sequence(m, 20, 5), sample_sequence(m, 20, 5));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) m.transitions(i, j) = 0.0;
    m.transitions(i, std::min<std::size_t>(i + 1, 4)) = 1.0;
  }
  const auto s = sample_with_states(m, 5, 9);
  EXPECT_EQ(s.states, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(HmmSerialization, RoundTripIsBitExact) {
  std::mt19937_64 gen(17);
  const HmmModel m = oracle::random_model(gen, 4, 3, 5);
  std::stringstream buf;
  io::BinaryWriter w(buf);
  write_model(w, m);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.size(), 4u + 16u + 8u * (16 + 12 + 60 + 60));
  io::BinaryReader r(buf, "mem");
  EXPECT_EQ(read_model(r), m);
  std::stringstream again;
  io::BinaryWriter w2(again);
  write_model(w2, m);
  EXPECT_EQ(again.str(), bytes);
}

TEST(HmmSerialization, RejectsBadMagic) {
  std::stringstream buf("XXXX");
  io::BinaryReader r(buf, "mem");
  EXPECT_THROW(read_model(r), FormatError);
}

}  // namespace
}  // namespace emoverify::hmm
