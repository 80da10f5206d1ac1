// tests/test_stage_a.cpp

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

#include <filesystem>
#include <sstream>

#include "fixtures.hpp"

namespace emoverify::stage_a {
namespace {

TEST(StageATrain, ReferenceProtocolPoolsFourteenFortyPerEmotion) {
  const auto counts = training_counts(corpus::reference_protocol_manifest());
  ASSERT_EQ(counts.size(), 6u);
  for (auto n : counts) EXPECT_EQ(n, 1440u);
}

corpus::CorpusManifest two_speaker_manifest() {
  corpus::CorpusManifest m;
  m.emotions = {"neutral", "angry"};
  for (const char *s : {"A", "B"})
    for (const char *e : {"neutral", "angry"})
      for (int g = 1; g <= 2; ++g)
        m.utterances.push_back({std::string(s) + e + std::to_string(g), "", s, e, g, 1,
                                g == 1 ? corpus::Split::train : corpus::Split::test, corpus::Role::claimant});
  return m;
}

corpus::FeatureStore random_store(const corpus::CorpusManifest &m) {
  corpus::FeatureStore store;
  std::uint64_t k = 0;
  for (const auto &u : m.utterances) {
    Rng rng(++k);
    ObservationPair obs;
    obs.acoustic = Matrix(30, 3);
    obs.prosodic = Matrix(3, frontend::kProsodicDim);
    for (double &v : obs.acoustic.data()) v = rng.normal();
    for (double &v : obs.prosodic.data()) v = rng.normal();
    store.emplace(u.id, obs);
  }
  return store;
}

TEST(StageATrain, TwoSpeakersOneUtteranceEachPoolTwo) {
  const auto m = two_speaker_manifest();
  EXPECT_EQ(training_counts(m), (std::vector<std::size_t>{2, 2}));
  TrainConfig cfg;
  cfg.states = 3;
  cfg.mixtures = 1;
  const auto set = train_emotion_models(m, random_store(m), cfg);
  EXPECT_EQ(set.pooled_counts, (std::vector<std::size_t>{2, 2}));
  EXPECT_NO_THROW(validate(set));
}

TEST(StageATrain, EmotionWithoutDataIsNamed) {
  auto m = two_speaker_manifest();
  m.emotions.push_back("fear");
  try {
    train_emotion_models(m, random_store(m), TrainConfig{});
    FAIL();
  } catch (const ValidationError &e) {
    EXPECT_NE(std::string(e.what()).find("fear"), std::string::npos);
  }
}

std::vector<sphmm::StreamScores> streams(std::initializer_list<std::pair<double, double>> v) {
  std::vector<sphmm::StreamScores> out;
  for (auto [a, p] : v) out.push_back({a, p});
  return out;
}

TEST(StageADecide, SingleEmotionAndTies) {
  EXPECT_EQ(decide_emotion(streams({{-3, -1}}), Mode::sphmm, 0.5).emotion, 0u);
  EXPECT_EQ(decide_emotion(streams({{-2, -2}, {-1, -3}, {-2, -2}}), Mode::sphmm, 0.5).emotion, 0u);
  EXPECT_EQ(decide_emotion(streams({{-5, 0}, {-1, -3}}), Mode::sphmm, 0.9).emotion, 0u);
  EXPECT_EQ(decide_emotion(streams({{-5, 0}, {-1, -3}}), Mode::hmm_only, 0.9).emotion, 1u);
}

TEST(StageADecide, ArgmaxInvariantUnderShiftAndPositiveScale) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<sphmm::StreamScores> s(6);
    for (auto &x : s) x = {rng.normal(), rng.normal()};
    const double alpha = rng.uniform();
    const auto base = decide_emotion(s, Mode::sphmm, alpha).emotion;
    const double c = 10 * rng.normal(), k = 0.1 + rng.uniform() * 5;
    auto moved = s;
    for (auto &x : moved) x = {k * x.acoustic + c, k * x.prosodic + c};
    EXPECT_EQ(decide_emotion(moved, Mode::sphmm, alpha).emotion, base);
  }
}

TEST(StageADecide, PriorShiftOnModelsPreservesIdentification) {
  const auto &b = fixture::benchmark();
  auto shifted = b.emotions;
  for (auto &m : shifted.models) {
    m.log_prior_acoustic = std::log(1.0 / 6);
    m.log_prior_prosodic = std::log(1.0 / 6);
  }
  int checked = 0;
  for (const auto *u : b.corpus.manifest.select(corpus::Split::test)) {
    if (++checked > 200) break;
    const auto &obs = b.corpus.features.at(u->id);
    EXPECT_EQ(identify_emotion(shifted, obs).emotion, identify_emotion(b.emotions, obs).emotion);
  }
}

TEST(StageADecide, HmmOnlyEqualsSphmmAtAlphaZero) {
  const auto &b = fixture::benchmark();
  auto hmm_only = b.emotions, zero = b.emotions;
  hmm_only.mode = Mode::hmm_only;
  zero.alpha = 0.0;
  for (const auto *u : b.corpus.manifest.select(corpus::Split::test)) {
    const auto &obs = b.corpus.features.at(u->id);
    ASSERT_EQ(identify_emotion(hmm_only, obs).emotion, identify_emotion(zero, obs).emotion);
  }
}

TEST(StageAIdentify, SadUtterancesIdentifiedAsSad) {
  const auto &b = fixture::benchmark();
  const auto spec = corpus::make_synthetic_spec(corpus::benchmark_design(11));
  const std::size_t sad = b.corpus.manifest.emotion_index("sad");
  int hits = 0, total = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto &gen = spec.generator(static_cast<std::size_t>(i % 10), sad);
    const std::uint64_t seed = derive_seed(99, std::to_string(i));
    ObservationPair obs;
    obs.acoustic = hmm::sample_sequence(gen.acoustic, 60, derive_seed(seed, "a"));
    obs.prosodic = hmm::sample_sequence(gen.prosodic, 6, derive_seed(seed, "p"));
    hits += identify_emotion(b.emotions, obs).emotion == sad;
    ++total;
  }
  EXPECT_GE(hits, 950) << hits << "/" << total;
}

TEST(StageAIdentify, OwnEmotionModelScoresHighestOnAverage) {
  const auto &b = fixture::benchmark();
  const std::size_t m = b.emotions.size();
  std::vector<std::vector<double>> sum(m, std::vector<double>(m, 0.0));
  std::vector<int> n(m, 0);
  for (const auto *u : b.corpus.manifest.select(corpus::Split::test)) {
    const std::size_t truth = b.corpus.manifest.emotion_index(u->emotion);
    const auto id = identify_emotion(b.emotions, b.corpus.features.at(u->id));
    for (std::size_t e = 0; e < m; ++e) sum[e][truth] += id.scores[e];
    ++n[truth];
  }
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t other = 0; other < m; ++other)
      if (other != e) {
        EXPECT_GT(sum[e][e] / n[e], sum[e][other] / n[other]) << e << " vs " << other;
      }
}

TEST(Confusion, PerfectAndForced) {
  const std::vector<std::string> labels{"a", "b", "c"};
  std::vector<std::pair<std::size_t, std::size_t>> perfect, forced;
  for (std::size_t t = 0; t < 3; ++t)
    for (int k = 0; k < 7; ++k) {
      perfect.emplace_back(t, t);
      forced.emplace_back(0, t);
    }
  const auto p = confusion(labels, perfect);
  EXPECT_EQ(p.accuracy(), 100.0);
  const auto f = confusion(labels, forced);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(f.percent(0, t), 100.0);
    EXPECT_EQ(f.percent(1, t) + f.percent(2, t), 0.0);
  }
  EXPECT_THROW(confusion(labels, {{0, 0}, {1, 1}}), ValidationError);
  EXPECT_THROW(confusion(labels, {}), ValidationError);
}

TEST(Confusion, ColumnsSumToHundredAndCsv) {
  const std::vector<std::string> labels{"a", "b"};
  const auto cm = confusion(labels, {{0, 0}, {1, 0}, {1, 0}, {1, 1}});
  EXPECT_NEAR(cm.percent(0, 0) + cm.percent(1, 0), 100.0, 1e-12);
  std::ostringstream out;
  write_confusion_csv(out, cm);
  EXPECT_EQ(out.str(),
            "predicted,true,count,percent\na,a,1,33.3333\na,b,0,0.0000\nb,a,2,66.6667\nb,b,1,100.0000\n");
}

TEST(Confusion, BenchmarkAccuracyAndChanceLevel) {
  const auto &b = fixture::benchmark();
  EXPECT_GE(confusion(b.emotions, b.corpus.manifest, b.corpus.features).accuracy(), 90.0);
  // Identical generators: predictions carry no information about the truth,
  // so the mean diagonal sits at 100/m.
  const auto &flat = fixture::benchmark(11, 0.0);
  const auto cm = confusion(flat.emotions, flat.corpus.manifest, flat.corpus.features);
  EXPECT_NEAR(cm.accuracy(), 100.0 / 6, 5.0);
}

TEST(StageAIo, RoundTrip) {
  const auto &b = fixture::benchmark();
  const auto dir = std::filesystem::temp_directory_path() / "emoverify_stage_a_io";
  std::filesystem::remove_all(dir);
  save_model_set(dir.string(), b.emotions);
  const auto back = load_model_set(dir.string());
  EXPECT_EQ(back.emotions, b.emotions.emotions);
  EXPECT_EQ(back.models, b.emotions.models);
  EXPECT_EQ(back.alpha, b.emotions.alpha);
  EXPECT_EQ(back.pooled_counts, b.emotions.pooled_counts);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace emoverify::stage_a
