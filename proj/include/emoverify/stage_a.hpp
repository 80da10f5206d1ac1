// emoverify/stage_a.hpp

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

// Emotion identification with speaker-pooled per-emotion models.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "emoverify/corpus.hpp"
#include "emoverify/sphmm.hpp"

namespace emoverify::stage_a {

using corpus::CorpusManifest;
using corpus::FeatureStore;
using frontend::ObservationPair;
using sphmm::SphmmModel;

enum class Mode { sphmm, hmm_only };

inline const char *to_string(Mode m) { return m == Mode::sphmm ? "sphmm" : "hmm_only"; }

inline Mode parse_mode(const std::string &s) {
  if (s == "sphmm") return Mode::sphmm;
  if (s == "hmm_only") return Mode::hmm_only;
  throw ValidationError("unknown stage-a mode '" + s + "'");
}

/// One model per emotion, in declared emotion order.
struct EmotionModelSet {
  std::vector<std::string> emotions;
  std::vector<SphmmModel> models;
  std::vector<std::size_t> pooled_counts;  // training utterances per emotion
  Mode mode = Mode::sphmm;
  double alpha = 0.5;

  std::size_t size() const { return emotions.size(); }
};

inline void validate(const EmotionModelSet &set) {
  if (set.emotions.empty()) throw ValidationError("emotion model set is empty");
  if (set.models.size() != set.emotions.size())
    throw ValidationError("emotion model set: label/model count mismatch");
  if (!(set.alpha >= 0.0 && set.alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  for (const auto &m : set.models) {
    sphmm::validate(m);
    if (m.acoustic.dim() != set.models.front().acoustic.dim() ||
        m.prosodic.hmm.dim() != set.models.front().prosodic.hmm.dim())
      throw ValidationError("emotion models disagree on feature dimensions");
  }
}

struct TrainConfig {
  std::size_t states = 6;
  std::size_t mixtures = 2;
  double alpha = 0.5;
  Mode mode = Mode::sphmm;
  sphmm::SphmmTrainConfig sphmm;  // sphmm.hmm.seed is the master seed
  unsigned workers = 1;
};

/// Training utterances of each emotion, pooled over all speakers.
inline std::vector<std::vector<ObservationPair>> pool_by_emotion(const CorpusManifest &manifest,
                                                                 const FeatureStore &store) {
  std::vector<std::vector<ObservationPair>> pools(manifest.emotions.size());
  for (const auto *u : manifest.select(corpus::Split::train))
    pools[manifest.emotion_index(u->emotion)].push_back(corpus::features_of(store, u->id));
  return pools;
}

/// Training utterances per emotion, pooled over speakers.
inline std::vector<std::size_t> training_counts(const CorpusManifest &manifest) {
  std::vector<std::size_t> n(manifest.emotions.size(), 0);
  for (const auto *u : manifest.select(corpus::Split::train)) ++n[manifest.emotion_index(u->emotion)];
  return n;
}

inline EmotionModelSet train_emotion_models(const CorpusManifest &manifest, const FeatureStore &store,
                                            const TrainConfig &cfg) {
  const auto pools = pool_by_emotion(manifest, store);
  for (std::size_t e = 0; e < pools.size(); ++e)
    if (pools[e].empty())
      throw ValidationError("emotion '" + manifest.emotions[e] + "' has no training utterances");
  EmotionModelSet set;
  set.emotions = manifest.emotions;
  set.mode = cfg.mode;
  set.alpha = cfg.alpha;
  set.models.resize(pools.size());
  for (const auto &p : pools) set.pooled_counts.push_back(p.size());
  parallel_for(pools.size(), cfg.workers, [&](std::size_t e) {
    sphmm::SphmmTrainConfig tc = cfg.sphmm;
    tc.hmm.seed = derive_seed(cfg.sphmm.hmm.seed, "emotion:" + manifest.emotions[e]);
    set.models[e] = sphmm::train_sphmm(pools[e], cfg.states, cfg.mixtures, cfg.alpha, tc);
  });
  return set;
}

/// Per-emotion stream scores for one utterance; fusing them for any alpha
/// is then free.
inline std::vector<sphmm::StreamScores> stream_scores(const EmotionModelSet &set,
                                                      const ObservationPair &obs) {
  std::vector<sphmm::StreamScores> out;
  out.reserve(set.size());
  for (const auto &m : set.models) out.push_back(sphmm::score_streams(m, obs));
  return out;
}

struct Identification {
  std::size_t emotion = 0;      // index into the declared emotion order
  std::vector<double> scores;   // decision score per emotion
};

/// Argmax of the decision scores; the first emotion wins ties.
inline Identification decide_emotion(const std::vector<sphmm::StreamScores> &streams, Mode mode,
                                     double alpha) {
  Identification id;
  for (const auto &s : streams)
    id.scores.push_back(mode == Mode::hmm_only ? s.acoustic : sphmm::fuse(alpha, s.acoustic, s.prosodic));
  for (std::size_t e = 1; e < id.scores.size(); ++e)
    if (id.scores[e] > id.scores[id.emotion]) id.emotion = e;
  return id;
}

inline Identification identify_emotion(const EmotionModelSet &set, const ObservationPair &obs) {
  return decide_emotion(stream_scores(set, obs), set.mode, set.alpha);
}

// ---------------------------------------------------------------------------

/// Rows are predicted emotions, columns are true emotions.
struct ConfusionMatrix {
  std::vector<std::string> emotions;
  std::vector<std::vector<std::size_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> labels = {})
      : emotions(std::move(labels)),
        counts(emotions.size(), std::vector<std::size_t>(emotions.size(), 0)) {}

  void add(std::size_t predicted, std::size_t truth) { ++counts.at(predicted).at(truth); }

  std::size_t column_total(std::size_t truth) const {
    std::size_t n = 0;
    for (const auto &row : counts) n += row[truth];
    return n;
  }

  /// Percentage of column `truth` predicted as `predicted`.
  double percent(std::size_t predicted, std::size_t truth) const {
    const std::size_t total = column_total(truth);
    return total ? 100.0 * static_cast<double>(counts[predicted][truth]) / static_cast<double>(total) : 0.0;
  }

  /// Mean of the diagonal percentages.
  double accuracy() const {
    double sum = 0.0;
    for (std::size_t e = 0; e < emotions.size(); ++e) sum += percent(e, e);
    return sum / static_cast<double>(emotions.size());
  }
};

/// Builds a confusion matrix from (predicted, true) index pairs.
inline ConfusionMatrix confusion(const std::vector<std::string> &emotions,
                                 const std::vector<std::pair<std::size_t, std::size_t>> &outcomes) {
  if (outcomes.empty()) throw ValidationError("confusion: empty test set");
  ConfusionMatrix cm(emotions);
  for (const auto &[pred, truth] : outcomes) cm.add(pred, truth);
  for (std::size_t e = 0; e < emotions.size(); ++e)
    if (cm.column_total(e) == 0)
      throw ValidationError("confusion: no test utterances for emotion '" + emotions[e] + "'");
  return cm;
}

/// Identifies every test utterance and tabulates the result.
inline ConfusionMatrix confusion(const EmotionModelSet &set, const CorpusManifest &manifest,
                                 const FeatureStore &store, unsigned workers = 1) {
  const auto test = manifest.select(corpus::Split::test);
  std::vector<std::pair<std::size_t, std::size_t>> outcomes(test.size());
  parallel_for(test.size(), workers, [&](std::size_t i) {
    outcomes[i] = {identify_emotion(set, corpus::features_of(store, test[i]->id)).emotion,
                   manifest.emotion_index(test[i]->emotion)};
  });
  return confusion(set.emotions, outcomes);
}

/// CSV: predicted,true,count,percent with one row per cell.
inline void write_confusion_csv(std::ostream &out, const ConfusionMatrix &cm) {
  out << "predicted,true,count,percent\n";
  char buf[32];
  for (std::size_t p = 0; p < cm.emotions.size(); ++p)
    for (std::size_t t = 0; t < cm.emotions.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.4f", cm.percent(p, t));
      out << cm.emotions[p] << ',' << cm.emotions[t] << ',' << cm.counts[p][t] << ',' << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// On disk: <dir>/index.txt lists mode, alpha and the emotions in order; each
// model lives in <dir>/<emotion>.evsp.

inline void save_model_set(const std::string &dir, const EmotionModelSet &set) {
  validate(set);
  std::filesystem::create_directories(dir);
  std::ofstream index(std::filesystem::path(dir) / "index.txt");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", set.alpha);
  index << "mode " << to_string(set.mode) << "\nalpha " << buf << "\n";
  for (std::size_t e = 0; e < set.size(); ++e) {
    index << "emotion " << set.emotions[e] << ' ' << set.pooled_counts.at(e) << '\n';
    sphmm::save_model((std::filesystem::path(dir) / (set.emotions[e] + ".evsp")).string(), set.models[e]);
  }
  if (!index) throw Error("cannot write emotion model index in " + dir);
}

inline EmotionModelSet load_model_set(const std::string &dir) {
  const auto path = std::filesystem::path(dir) / "index.txt";
  std::ifstream index(path);
  if (!index) throw Error("cannot open " + path.string());
  EmotionModelSet set;
  std::string line;
  while (std::getline(index, line)) {
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "mode") {
      std::string v;
      in >> v;
      set.mode = parse_mode(v);
    } else if (key == "alpha") {
      in >> set.alpha;
    } else if (key == "emotion") {
      std::string label;
      std::size_t count = 0;
      in >> label >> count;
      set.emotions.push_back(label);
      set.pooled_counts.push_back(count);
      set.models.push_back(sphmm::load_model((std::filesystem::path(dir) / (label + ".evsp")).string()));
    } else if (!key.empty()) {
      throw FormatError(path.string() + ": unknown key '" + key + "'");
    }
  }
  validate(set);
  return set;
}

}  // namespace emoverify::stage_a
