// tests/test_sphmm.cpp

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

#include "emoverify/sphmm.hpp"
#include "oracles.hpp"

namespace emoverify::sphmm {
namespace {

SphmmModel random_sphmm(std::mt19937_64 &gen, std::size_t n, bool composite = true) {
  SphmmModel m;
  m.acoustic = oracle::random_model(gen, n, 2, 3);
  m.prosodic.hmm = oracle::random_model(gen, suprasegmental_state_count(n), 2, 4);
  m.prosodic.summary_map = make_summary_map(n);
  m.prosodic.composite_enabled = composite;
  if (composite) {
    std::uniform_real_distribution<double> u(0.3, 2.0);
    for (int d = 0; d < 4; ++d) {
      m.prosodic.composite_mean.push_back(u(gen) - 1.0);
      m.prosodic.composite_var.push_back(u(gen));
    }
  }
  m.alpha = 0.5;
  return m;
}

ObservationPair random_pair(std::mt19937_64 &gen, std::size_t frames, std::size_t blocks) {
  ObservationPair obs;
  obs.acoustic = oracle::random_observations(gen, frames, 3);
  obs.prosodic = oracle::random_observations(gen, blocks, 4);
  obs.source = "u";
  return obs;
}

// Prosodic score rebuilt from the brute-force oracles.
double oracle_prosodic(const SphmmModel &m, const ObservationPair &obs) {
  const double tp = static_cast<double>(obs.prosodic.rows());
  double s = static_cast<double>(oracle::brute_force_log_forward(m.prosodic.hmm, obs.prosodic)) / tp;
  if (m.prosodic.composite_enabled) {
    std::vector<double> mean(obs.prosodic.cols(), 0.0);
    for (std::size_t t = 0; t < obs.prosodic.rows(); ++t)
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += obs.prosodic(t, d) / tp;
    s += static_cast<double>(oracle::gaussian_log_density(mean, m.prosodic.composite_mean,
                                                          m.prosodic.composite_var)) / tp;
  }
  return s + m.log_prior_prosodic / tp;
}

TEST(SphmmTopology, SixStatesSummarizeIntoTwo) {
  EXPECT_EQ(suprasegmental_state_count(6), 2u);
  EXPECT_EQ(make_summary_map(6), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(suprasegmental_state_count(3), 1u);
  EXPECT_EQ(make_summary_map(3), (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(suprasegmental_state_count(7), 3u);
}

TEST(SphmmScore, AcousticMatchesOracleWithPrior) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    SphmmModel m = random_sphmm(gen, 3);
    m.log_prior_acoustic = std::log(0.2);
    const auto obs = random_pair(gen, 2 + trial % 5, 2);
    const double t = static_cast<double>(obs.acoustic.rows());
    const double want =
        static_cast<double>(oracle::brute_force_log_forward(m.acoustic, obs.acoustic)) / t +
        std::log(0.2) / t;
    EXPECT_NEAR(score_acoustic(m, obs), want, 1e-12);
  }
}

TEST(SphmmScore, SingleGaussianAcousticClosedForm) {
  std::mt19937_64 gen(2);
  SphmmModel m = random_sphmm(gen, 1);
  m.acoustic = oracle::random_model(gen, 1, 1, 3);
  const auto obs = random_pair(gen, 5, 1);
  double want = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    std::vector<double> x(obs.acoustic.row(t).begin(), obs.acoustic.row(t).end());
    want += static_cast<double>(oracle::gaussian_log_density(x, m.acoustic.states[0].means.row(0),
                                                             m.acoustic.states[0].variances.row(0)));
  }
  EXPECT_NEAR(score_acoustic(m, obs), want / 5.0, 1e-12);
}

TEST(SphmmScore, ProsodicMatchesOracle) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    SphmmModel m = random_sphmm(gen, 6, trial % 2 == 0);
    m.log_prior_prosodic = -0.7;
    const auto obs = random_pair(gen, 4, 1 + trial % 5);
    EXPECT_NEAR(score_prosodic(m, obs), oracle_prosodic(m, obs), 1e-12);
  }
}

TEST(SphmmScore, SingleBlockUsesFirstStateEmission) {
  std::mt19937_64 gen(4);
  SphmmModel m = random_sphmm(gen, 6, false);
  const auto obs = random_pair(gen, 3, 1);
  std::vector<double> x(obs.prosodic.row(0).begin(), obs.prosodic.row(0).end());
  EXPECT_NEAR(score_prosodic(m, obs),
              static_cast<double>(oracle::mixture_log_density(m.prosodic.hmm.states[0], x)), 1e-12);
}

TEST(SphmmScore, CompositeFlagRemovesTerm) {
  std::mt19937_64 gen(5);
  SphmmModel m = random_sphmm(gen, 6, true);
  const auto obs = random_pair(gen, 8, 4);
  m.prosodic.composite_enabled = false;
  EXPECT_DOUBLE_EQ(score_prosodic(m, obs), hmm::avg_frame_ll(m.prosodic.hmm, obs.prosodic));
}

TEST(SphmmFusion, EndpointsAreExactStreamScores) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    SphmmModel m = random_sphmm(gen, 3);
    const auto obs = random_pair(gen, 6, 3);
    m.alpha = 0.0;
    EXPECT_EQ(score_fused(m, obs), score_acoustic(m, obs));
    m.alpha = 1.0;
    EXPECT_EQ(score_fused(m, obs), score_prosodic(m, obs));
    const double f0 = fuse(0.0, score_acoustic(m, obs), score_prosodic(m, obs));
    const double f1 = fuse(1.0, score_acoustic(m, obs), score_prosodic(m, obs));
    m.alpha = 0.5;
    EXPECT_NEAR(score_fused(m, obs), 0.5 * (f0 + f1), 1e-12);
  }
  EXPECT_DOUBLE_EQ(fuse(0.5, -4.0, -2.0), -3.0);
}

TEST(SphmmFusion, UniformPriorShiftPreservesArgmax) {
  std::mt19937_64 gen(7);
  std::vector<SphmmModel> models;
  for (int i = 0; i < 4; ++i) models.push_back(random_sphmm(gen, 3));
  const auto obs = random_pair(gen, 6, 3);
  auto argmax = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < models.size(); ++i)
      if (score_fused(models[i], obs) > score_fused(models[best], obs)) best = i;
    return best;
  };
  const auto before = argmax();
  for (auto &m : models) {
    m.log_prior_acoustic = std::log(0.25);
    m.log_prior_prosodic = std::log(0.25);
  }
  EXPECT_EQ(argmax(), before);
}

std::vector<ObservationPair> training_set(std::uint64_t seed, int count) {
  std::mt19937_64 gen(seed);
  const auto truth = oracle::random_model(gen, 6, 2, 3);
  const auto ptruth = oracle::random_model(gen, 2, 1, 4);
  std::vector<ObservationPair> out;
  for (int u = 0; u < count; ++u) {
    ObservationPair obs;
    obs.acoustic = hmm::sample_sequence(truth, 40 + u, seed + u);
    obs.prosodic = hmm::sample_sequence(ptruth, 4 + u % 3, seed + 1000 + u);
    obs.source = "u" + std::to_string(u);
    out.push_back(obs);
  }
  return out;
}

TEST(SphmmTrain, ShapeDeterminismAndValidity) {
  const auto data = training_set(11, 8);
  SphmmTrainConfig cfg;
  cfg.hmm.seed = 5;
  const auto a = train_sphmm(data, 6, 2, 0.3, cfg);
  EXPECT_NO_THROW(validate(a));
  EXPECT_EQ(a.prosodic.num_states(), 2u);
  EXPECT_EQ(a.prosodic.summary_map, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(a.prosodic.hmm.num_mixtures(), 2u);
  EXPECT_EQ(a.alpha, 0.3);
  std::stringstream s1, s2;
  io::BinaryWriter w1(s1), w2(s2);
  write_model(w1, a);
  write_model(w2, train_sphmm(data, 6, 2, 0.3, cfg));
  EXPECT_EQ(s1.str(), s2.str());
  io::BinaryReader r(s1, "mem");
  EXPECT_EQ(read_model(r), a);
}

TEST(SphmmTrain, ThreeStatesGiveOneSuprasegmentalState) {
  const auto data = training_set(12, 4);
  const auto m = train_sphmm(data, 3, 1, 0.5, SphmmTrainConfig{});
  EXPECT_EQ(m.prosodic.num_states(), 1u);
}

TEST(SphmmTrain, RejectsEmptyAndBadAlpha) {
  EXPECT_THROW(train_sphmm(std::vector<ObservationPair>{}, 6, 2, 0.5, SphmmTrainConfig{}),
               ValidationError);
  EXPECT_THROW(train_sphmm(training_set(1, 2), 6, 2, 1.5, SphmmTrainConfig{}), ValidationError);
}

TEST(SphmmValidate, CatchesBrokenSummaryMap) {
  std::mt19937_64 gen(8);
  SphmmModel m = random_sphmm(gen, 6);
  EXPECT_NO_THROW(validate(m));
  m.prosodic.summary_map = {0, 0, 1, 0, 1, 1};
  EXPECT_THROW(validate(m), ValidationError);
  m.prosodic.summary_map = make_summary_map(6);
  m.alpha = -0.1;
  EXPECT_THROW(validate(m), ValidationError);
}

}  // namespace
}  // namespace emoverify::sphmm
