// emoverify/stage_b.hpp

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

// Emotion-conditioned speaker verification.
//
// Every enrolled speaker has one model per emotion plus one model pooled over
// all emotions. A claim is scored against the claimed speaker's model for the
// identified emotion E*, with the background being the arithmetic mean of the
// log scores under that speaker's other m-1 emotion models.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emoverify/corpus.hpp"
#include "emoverify/sphmm.hpp"
#include "emoverify/stage_a.hpp"

namespace emoverify::stage_b {

using corpus::CorpusManifest;
using corpus::FeatureStore;
using frontend::ObservationPair;
using sphmm::SphmmModel;

struct SpeakerModelSet {
  std::vector<std::string> emotions;
  std::vector<std::string> speakers;                                   // enrolled, in order
  std::map<std::string, std::vector<SphmmModel>> cells;                // speaker -> per-emotion
  std::map<std::string, SphmmModel> pooled;                            // speaker -> emotion-pooled

  bool enrolled(const std::string &speaker) const { return cells.count(speaker) > 0; }

  const SphmmModel &cell(const std::string &speaker, std::size_t emotion) const {
    const auto it = cells.find(speaker);
    if (it == cells.end()) throw ValidationError("speaker '" + speaker + "' is not enrolled");
    return it->second.at(emotion);
  }
};

/// Stage-b scoring: acoustic HMM only, or the fused SPHMM score.
struct Scoring {
  bool fused = false;
  double alpha = 0.5;

  double operator()(const SphmmModel &m, const ObservationPair &obs) const {
    if (!fused) return sphmm::score_acoustic(m, obs);
    return sphmm::fuse(alpha, sphmm::score_acoustic(m, obs), sphmm::score_prosodic(m, obs));
  }
};

struct EnrollConfig {
  std::size_t states = 6;
  std::size_t mixtures = 2;
  std::size_t pooled_mixtures = 2;
  double alpha = 0.5;
  sphmm::SphmmTrainConfig sphmm;  // sphmm.hmm.seed is the master seed
  unsigned workers = 1;
};

/// Training utterances per (claimant, emotion).
inline std::map<std::pair<std::string, std::string>, std::size_t> training_counts(const CorpusManifest &manifest) {
  std::map<std::pair<std::string, std::string>, std::size_t> n;
  for (const auto *u : manifest.select(corpus::Split::train))
    if (u->role == corpus::Role::claimant) ++n[{u->speaker, u->emotion}];
  return n;
}

/// Trains one model per (claimant, emotion) and one pooled model per claimant.
inline SpeakerModelSet enroll(const CorpusManifest &manifest, const FeatureStore &store,
                              const EnrollConfig &cfg) {
  SpeakerModelSet set;
  set.emotions = manifest.emotions;
  set.speakers = manifest.speakers_with_role(corpus::Role::claimant);
  const std::size_t ne = set.emotions.size();
  std::map<std::string, std::size_t> spk_index;
  for (std::size_t s = 0; s < set.speakers.size(); ++s) spk_index[set.speakers[s]] = s;

  std::vector<std::vector<ObservationPair>> data(set.speakers.size() * ne);
  for (const auto *u : manifest.select(corpus::Split::train)) {
    const auto it = spk_index.find(u->speaker);
    if (it == spk_index.end()) continue;
    data[it->second * ne + manifest.emotion_index(u->emotion)].push_back(corpus::features_of(store, u->id));
  }
  for (std::size_t s = 0; s < set.speakers.size(); ++s)
    for (std::size_t e = 0; e < ne; ++e)
      if (data[s * ne + e].empty())
        throw ValidationError("(" + set.speakers[s] + ", " + set.emotions[e] + ") unenrolled");

  // Jobs: every cell, then every pooled model.
  const std::size_t num_cells = data.size();
  std::vector<SphmmModel> trained(num_cells + set.speakers.size());
  parallel_for(trained.size(), cfg.workers, [&](std::size_t job) {
    sphmm::SphmmTrainConfig tc = cfg.sphmm;
    if (job < num_cells) {
      const auto &spk = set.speakers[job / ne];
      tc.hmm.seed = derive_seed(cfg.sphmm.hmm.seed, "cell:" + spk + ":" + set.emotions[job % ne]);
      trained[job] = sphmm::train_sphmm(data[job], cfg.states, cfg.mixtures, cfg.alpha, tc);
    } else {
      const std::size_t s = job - num_cells;
      std::vector<ObservationPair> all;
      for (std::size_t e = 0; e < ne; ++e)
        all.insert(all.end(), data[s * ne + e].begin(), data[s * ne + e].end());
      tc.hmm.seed = derive_seed(cfg.sphmm.hmm.seed, "pooled:" + set.speakers[s]);
      trained[job] = sphmm::train_sphmm(all, cfg.states, cfg.pooled_mixtures, cfg.alpha, tc);
    }
  });
  for (std::size_t s = 0; s < set.speakers.size(); ++s) {
    auto &row = set.cells[set.speakers[s]];
    for (std::size_t e = 0; e < ne; ++e) row.push_back(std::move(trained[s * ne + e]));
    set.pooled.emplace(set.speakers[s], std::move(trained[num_cells + s]));
  }
  return set;
}

/// Lambda from precomputed scores: the E* score minus the mean of the other
/// emotions' log scores (a mean of logs, not the log of a mean).
inline double llr_from_scores(const std::vector<double> &scores, std::size_t e_star) {
  if (scores.size() < 2) throw ValidationError("llr needs at least two emotion models");
  double background = 0.0;
  for (std::size_t e = 0; e < scores.size(); ++e)
    if (e != e_star) background += scores[e];
  background /= static_cast<double>(scores.size() - 1);
  return scores.at(e_star) - background;
}

inline std::vector<double> claim_scores(const SpeakerModelSet &models, const std::string &claimed,
                                        const ObservationPair &obs, const Scoring &scoring) {
  if (!models.enrolled(claimed)) throw ValidationError("speaker '" + claimed + "' is not enrolled");
  std::vector<double> scores;
  for (const auto &m : models.cells.at(claimed)) scores.push_back(scoring(m, obs));
  return scores;
}

inline double llr(const SpeakerModelSet &models, const std::string &claimed, std::size_t e_star,
                  const ObservationPair &obs, const Scoring &scoring = {}) {
  if (e_star >= models.emotions.size()) throw ValidationError("E* outside the emotion set");
  return llr_from_scores(claim_scores(models, claimed, obs, scoring), e_star);
}

/// Emotion-independent baseline: the claimed speaker's pooled model against
/// the mean log score of every other enrolled speaker's pooled model.
inline double llr_one_stage(const SpeakerModelSet &models, const std::string &claimed,
                            const ObservationPair &obs, const Scoring &scoring = {}) {
  if (!models.enrolled(claimed)) throw ValidationError("speaker '" + claimed + "' is not enrolled");
  if (models.speakers.size() < 2) throw ValidationError("one-stage background needs two speakers");
  double background = 0.0;
  for (const auto &s : models.speakers)
    if (s != claimed) background += scoring(models.pooled.at(s), obs);
  background /= static_cast<double>(models.speakers.size() - 1);
  return scoring(models.pooled.at(claimed), obs) - background;
}

enum class Decision { accept, reject };

inline const char *to_string(Decision d) { return d == Decision::accept ? "accept" : "reject"; }

inline Decision decide(double lambda, double theta) {
  if (!std::isfinite(lambda) || !std::isfinite(theta))
    throw ValidationError("decide needs finite score and threshold");
  return lambda >= theta ? Decision::accept : Decision::reject;
}

/// Mean of the last min(window, history.size()) scores, or theta_init when
/// there is no history yet.
inline double adapt_threshold(double theta_init, std::span<const double> history, std::size_t window) {
  if (window < 1) throw ValidationError("threshold window must be >= 1");
  if (history.empty()) return theta_init;
  const std::size_t n = std::min(window, history.size());
  double sum = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) sum += history[i];
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Trials

enum class TrialMode { two_stage, one_stage, hmm_only, worst_case, oracle };

inline const char *to_string(TrialMode m) {
  switch (m) {
    case TrialMode::two_stage: return "two_stage";
    case TrialMode::one_stage: return "one_stage";
    case TrialMode::hmm_only: return "hmm_only";
    case TrialMode::worst_case: return "worst_case";
    case TrialMode::oracle: return "oracle";
  }
  return "?";
}

inline TrialMode parse_trial_mode(const std::string &s) {
  for (auto m : {TrialMode::two_stage, TrialMode::one_stage, TrialMode::hmm_only, TrialMode::worst_case,
                 TrialMode::oracle})
    if (s == to_string(m)) return m;
  throw ValidationError("unknown mode '" + s + "'");
}

enum class Truth { target, nontarget };

inline const char *to_string(Truth t) { return t == Truth::target ? "target" : "nontarget"; }

struct TrialRecord {
  std::string utterance;
  std::string claimed;
  std::string true_speaker;
  std::string emotion;  // true label of the utterance
  std::string e_star;   // empty for one_stage
  TrialMode mode = TrialMode::two_stage;
  double lambda = 0.0;
  double theta = 0.0;
  Decision decision = Decision::reject;
  Truth truth = Truth::nontarget;
  std::string error;  // non-empty when the claim could not be scored
};

struct TrialConfig {
  std::size_t nontarget_claims = 1;  // per test utterance
  bool imposters_only = false;       // nontarget trials only from imposter speakers
  double theta = 0.0;
  std::size_t adapt_window = 0;      // 0 = fixed threshold
  Scoring scoring;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

struct PlannedTrial {
  std::size_t utterance;  // index into the manifest's utterance list
  std::string claimed;
};

/// Every test utterance of a claimant gives one target trial; every test
/// utterance then gives `nontarget_claims` claims of distinct enrolled
/// speakers other than its own, drawn with a per-utterance seed.
inline std::vector<PlannedTrial> plan_trials(const CorpusManifest &manifest,
                                             const std::vector<std::string> &enrolled,
                                             const TrialConfig &cfg) {
  std::vector<PlannedTrial> plan;
  for (std::size_t i = 0; i < manifest.utterances.size(); ++i) {
    const auto &u = manifest.utterances[i];
    if (u.split != corpus::Split::test) continue;
    if (u.role == corpus::Role::claimant) plan.push_back({i, u.speaker});
    if (cfg.imposters_only && u.role == corpus::Role::claimant) continue;
    std::vector<std::string> others;
    for (const auto &s : enrolled)
      if (s != u.speaker) others.push_back(s);
    Rng rng(derive_seed(cfg.seed, "claims:" + u.id));
    const std::size_t k = std::min(cfg.nontarget_claims, others.size());
    for (std::size_t j = 0; j < k; ++j) {  // partial Fisher-Yates
      std::swap(others[j], others[j + rng.index(others.size() - j)]);
      plan.push_back({i, others[j]});
    }
  }
  return plan;
}

/// A wrong emotion drawn uniformly from the m-1 labels other than `truth`.
inline std::size_t wrong_emotion(std::size_t truth, std::size_t m, std::uint64_t seed) {
  if (m < 2) throw ValidationError("worst-case mode needs at least two emotions");
  Rng rng(seed);
  const std::size_t pick = rng.index(m - 1);
  return pick < truth ? pick : pick + 1;
}

/// Alpha-independent ingredients of every planned trial. Fusion is linear,
/// so any alpha, mode or threshold rule can be evaluated from this without
/// rescoring.
struct TrialCache {
  std::vector<PlannedTrial> plan;
  std::vector<std::size_t> utterances;               // distinct test utterances, plan order
  std::vector<std::size_t> slot;                     // plan index -> utterances index
  std::vector<std::vector<sphmm::StreamScores>> emotion_scores;  // per utterance, stage-a models
  std::vector<std::vector<sphmm::StreamScores>> cell_scores;     // per trial, claimed speaker's cells
  std::vector<sphmm::StreamScores> pooled_claimed;               // per trial
  std::vector<sphmm::StreamScores> pooled_background;            // per trial, mean over other speakers
  std::vector<std::string> errors;                               // per trial
};

struct CacheContents {
  bool stage_a = true;
  bool cells = true;
  bool pooled = true;
};

inline TrialCache build_cache(const SpeakerModelSet &models, const stage_a::EmotionModelSet *emotion_models,
                              const CorpusManifest &manifest, const FeatureStore &store,
                              const TrialConfig &cfg, CacheContents what = {}) {
  if (what.stage_a && !emotion_models) throw ValidationError("stage-a emotion models required");
  TrialCache c;
  c.plan = plan_trials(manifest, models.speakers, cfg);
  std::map<std::size_t, std::size_t> seen;
  for (const auto &p : c.plan) {
    const auto [it, fresh] = seen.emplace(p.utterance, c.utterances.size());
    if (fresh) c.utterances.push_back(p.utterance);
    c.slot.push_back(it->second);
  }
  const auto &utts = manifest.utterances;
  if (what.stage_a) {
    c.emotion_scores.resize(c.utterances.size());
    parallel_for(c.utterances.size(), cfg.workers, [&](std::size_t i) {
      c.emotion_scores[i] =
          stage_a::stream_scores(*emotion_models, corpus::features_of(store, utts[c.utterances[i]].id));
    });
  }
  const std::size_t n = c.plan.size();
  c.cell_scores.resize(n);
  c.pooled_claimed.resize(n);
  c.pooled_background.resize(n);
  c.errors.resize(n);
  parallel_for(n, cfg.workers, [&](std::size_t t) {
    const std::string &claimed = c.plan[t].claimed;
    if (!models.enrolled(claimed) || (what.pooled && !models.pooled.count(claimed))) {
      c.errors[t] = "speaker '" + claimed + "' is not enrolled";
      return;
    }
    const auto &obs = corpus::features_of(store, utts[c.plan[t].utterance].id);
    if (what.cells)
      for (const auto &m : models.cells.at(claimed)) c.cell_scores[t].push_back(sphmm::score_streams(m, obs));
    if (what.pooled) {
      c.pooled_claimed[t] = sphmm::score_streams(models.pooled.at(claimed), obs);
      sphmm::StreamScores bg{0.0, 0.0};
      std::size_t others = 0;
      for (const auto &s : models.speakers) {
        if (s == claimed) continue;
        if (!models.pooled.count(s)) {
          c.errors[t] = "speaker '" + s + "' has no pooled model";
          return;
        }
        const auto sc = sphmm::score_streams(models.pooled.at(s), obs);
        bg.acoustic += sc.acoustic;
        bg.prosodic += sc.prosodic;
        ++others;
      }
      if (others == 0) {
        c.errors[t] = "one-stage background needs two enrolled speakers";
        return;
      }
      c.pooled_background[t] = {bg.acoustic / static_cast<double>(others),
                                bg.prosodic / static_cast<double>(others)};
    }
  });
  return c;
}

/// Knobs that only affect how cached scores are combined.
struct EvalSettings {
  double stage_a_alpha = 0.5;
  stage_a::Mode stage_a_mode = stage_a::Mode::sphmm;
  Scoring scoring;  // stage b
};

inline std::vector<TrialRecord> evaluate_cache(const TrialCache &c, const CorpusManifest &manifest,
                                               TrialMode mode, const EvalSettings &settings,
                                               const TrialConfig &cfg) {
  const std::size_t m = manifest.emotions.size();
  auto stage_b_score = [&](const sphmm::StreamScores &s) {
    return settings.scoring.fused ? sphmm::fuse(settings.scoring.alpha, s.acoustic, s.prosodic) : s.acoustic;
  };

  std::vector<std::size_t> e_star(c.utterances.size(), 0);
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const auto &u = manifest.utterances[c.utterances[i]];
    const std::size_t truth = manifest.emotion_index(u.emotion);
    switch (mode) {
      case TrialMode::one_stage: break;
      case TrialMode::oracle: e_star[i] = truth; break;
      case TrialMode::worst_case:
        e_star[i] = wrong_emotion(truth, m, derive_seed(cfg.seed, "wrong:" + u.id));
        break;
      case TrialMode::two_stage:
      case TrialMode::hmm_only: {
        if (c.emotion_scores.empty()) throw ValidationError("mode needs stage-a scores");
        const auto am = mode == TrialMode::hmm_only ? stage_a::Mode::hmm_only : settings.stage_a_mode;
        e_star[i] = stage_a::decide_emotion(c.emotion_scores[i], am, settings.stage_a_alpha).emotion;
        break;
      }
    }
  }

  std::vector<TrialRecord> records(c.plan.size());
  std::vector<double> history;
  std::vector<double> scores;
  for (std::size_t t = 0; t < c.plan.size(); ++t) {
    const auto &u = manifest.utterances[c.plan[t].utterance];
    TrialRecord &r = records[t];
    r.utterance = u.id;
    r.claimed = c.plan[t].claimed;
    r.true_speaker = u.speaker;
    r.emotion = u.emotion;
    r.mode = mode;
    r.truth = r.claimed == r.true_speaker ? Truth::target : Truth::nontarget;
    const std::size_t e = e_star[c.slot[t]];
    if (mode != TrialMode::one_stage) r.e_star = manifest.emotions[e];
    r.theta = cfg.adapt_window ? adapt_threshold(cfg.theta, history, cfg.adapt_window) : cfg.theta;
    if (!c.errors[t].empty()) {
      r.error = c.errors[t];
      r.lambda = std::nan("");
      continue;
    }
    if (mode == TrialMode::one_stage) {
      r.lambda = stage_b_score(c.pooled_claimed[t]) - stage_b_score(c.pooled_background[t]);
    } else {
      scores.clear();
      for (const auto &s : c.cell_scores[t]) scores.push_back(stage_b_score(s));
      r.lambda = llr_from_scores(scores, e);
    }
    r.decision = decide(r.lambda, r.theta);
    history.push_back(r.lambda);
  }
  return records;
}

/// Scores and decides every planned trial. `emotion_models` is required for
/// two_stage and hmm_only. Output follows plan order; thresholds adapt
/// sequentially when `adapt_window` > 0.
inline std::vector<TrialRecord> run_trials(const SpeakerModelSet &models,
                                           const stage_a::EmotionModelSet *emotion_models,
                                           const CorpusManifest &manifest, const FeatureStore &store,
                                           TrialMode mode, const TrialConfig &cfg) {
  CacheContents what;
  what.stage_a = mode == TrialMode::two_stage || mode == TrialMode::hmm_only;
  what.cells = mode != TrialMode::one_stage;
  what.pooled = mode == TrialMode::one_stage;
  const auto cache = build_cache(models, emotion_models, manifest, store, cfg, what);
  EvalSettings settings;
  if (emotion_models) {
    settings.stage_a_alpha = emotion_models->alpha;
    settings.stage_a_mode = emotion_models->mode;
  }
  settings.scoring = cfg.scoring;
  return evaluate_cache(cache, manifest, mode, settings, cfg);
}

inline void write_trials_csv(std::ostream &out, const std::vector<TrialRecord> &records) {
  out << "utterance,claimed,true,e_star,mode,lambda,theta,decision,truth\n";
  char lam[40], th[40];
  for (const auto &r : records) {
    std::snprintf(lam, sizeof lam, "%.10g", r.lambda);
    std::snprintf(th, sizeof th, "%.10g", r.theta);
    out << r.utterance << ',' << r.claimed << ',' << r.true_speaker << ',' << r.e_star << ','
        << to_string(r.mode) << ',' << (r.error.empty() ? lam : "nan") << ',' << th << ','
        << (r.error.empty() ? to_string(r.decision) : "error") << ',' << to_string(r.truth) << '\n';
  }
}

// ---------------------------------------------------------------------------
// On disk: <dir>/index.txt lists emotions and speakers; models live in
// <dir>/<speaker>/<emotion>.evsp and <dir>/<speaker>/pooled.evsp.

inline void save_model_set(const std::string &dir, const SpeakerModelSet &set) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream index(fs::path(dir) / "index.txt");
  index << "emotions";
  for (const auto &e : set.emotions) index << ' ' << e;
  index << "\nspeakers";
  for (const auto &s : set.speakers) index << ' ' << s;
  index << '\n';
  for (const auto &s : set.speakers) {
    const auto sub = fs::path(dir) / s;
    fs::create_directories(sub);
    for (std::size_t e = 0; e < set.emotions.size(); ++e)
      sphmm::save_model((sub / (set.emotions[e] + ".evsp")).string(), set.cell(s, e));
    sphmm::save_model((sub / "pooled.evsp").string(), set.pooled.at(s));
  }
  if (!index) throw Error("cannot write speaker model index in " + dir);
}

inline SpeakerModelSet load_model_set(const std::string &dir) {
  namespace fs = std::filesystem;
  const auto path = fs::path(dir) / "index.txt";
  std::ifstream index(path);
  if (!index) throw Error("cannot open " + path.string());
  SpeakerModelSet set;
  std::string line;
  while (std::getline(index, line)) {
    std::istringstream in(line);
    std::string key, word;
    in >> key;
    auto &target = key == "emotions" ? set.emotions : set.speakers;
    if (key != "emotions" && key != "speakers") {
      if (key.empty()) continue;
      throw FormatError(path.string() + ": unknown key '" + key + "'");
    }
    while (in >> word) target.push_back(word);
  }
  for (const auto &s : set.speakers) {
    auto &row = set.cells[s];
    for (const auto &e : set.emotions)
      row.push_back(sphmm::load_model((fs::path(dir) / s / (e + ".evsp")).string()));
    set.pooled.emplace(s, sphmm::load_model((fs::path(dir) / s / "pooled.evsp").string()));
  }
  return set;
}

}  // namespace emoverify::stage_b
