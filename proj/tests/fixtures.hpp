// tests/fixtures.hpp

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

// Trained models on synthetic corpora, built once per test binary.

#pragma once

#include <map>
#include <memory>

#include "emoverify/corpus.hpp"
#include "emoverify/stage_a.hpp"
#include "emoverify/stage_b.hpp"

namespace emoverify::fixture {

struct Trained {
  corpus::SyntheticCorpus corpus;
  stage_a::EmotionModelSet emotions;
  stage_b::SpeakerModelSet speakers;
};

inline Trained train(const corpus::SyntheticDesign &design, std::uint64_t train_seed, unsigned workers = 2) {
  Trained t;
  t.corpus = corpus::generate_synthetic(corpus::make_synthetic_spec(design), workers);
  stage_a::TrainConfig ac;
  ac.sphmm.hmm.seed = train_seed;
  ac.workers = workers;
  t.emotions = stage_a::train_emotion_models(t.corpus.manifest, t.corpus.features, ac);
  stage_b::EnrollConfig ec;
  ec.sphmm.hmm.seed = train_seed;
  ec.workers = workers;
  t.speakers = stage_b::enroll(t.corpus.manifest, t.corpus.features, ec);
  return t;
}

/// The default benchmark corpus and its models, trained on first use.
inline const Trained &benchmark(std::uint64_t seed = 11, double separability = 1.0) {
  static std::map<std::pair<std::uint64_t, double>, std::unique_ptr<Trained>> cache;
  auto &slot = cache[{seed, separability}];
  if (!slot) slot = std::make_unique<Trained>(train(corpus::benchmark_design(seed, separability), 5));
  return *slot;
}

}  // namespace emoverify::fixture
