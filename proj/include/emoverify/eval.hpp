// emoverify/eval.hpp

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

// Error-rate metrics, summary statistics, the equal-n t-test and the
// experiment drivers that tie stage a and stage b together.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoverify/stage_a.hpp"
#include "emoverify/stage_b.hpp"

namespace emoverify::eval {

struct ScoreSet {
  std::vector<double> targets;
  std::vector<double> nontargets;
  std::string label;
};

struct OperatingPoint {
  double theta;
  double far;  // fraction of nontargets with score >= theta
  double frr;  // fraction of targets with score < theta
};

/// FAR/FRR at -inf, every distinct score in ascending order, and +inf.
inline std::vector<OperatingPoint> far_frr_curve(const ScoreSet &scores) {
  if (scores.targets.empty() || scores.nontargets.empty())
    throw ValidationError("score set '" + scores.label + "' needs target and nontarget scores");
  for (const auto *v : {&scores.targets, &scores.nontargets})
    for (double x : *v)
      if (std::isnan(x)) throw ValidationError("score set '" + scores.label + "' contains NaN");
  std::vector<double> tar = scores.targets, non = scores.nontargets;
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  if (thresholds.front() != kNegInf) thresholds.insert(thresholds.begin(), kNegInf);
  if (thresholds.back() != kPosInf) thresholds.push_back(kPosInf);

  const double nt = static_cast<double>(tar.size()), nn = static_cast<double>(non.size());
  std::vector<OperatingPoint> curve;
  curve.reserve(thresholds.size());
  std::size_t below_t = 0, below_n = 0;  // scores strictly below theta
  for (double th : thresholds) {
    while (below_t < tar.size() && tar[below_t] < th) ++below_t;
    while (below_n < non.size() && non[below_n] < th) ++below_n;
    curve.push_back({th, static_cast<double>(non.size() - below_n) / nn, static_cast<double>(below_t) / nt});
  }
  return curve;
}

struct EerResult {
  double eer_percent;
  double theta;
};

/// (FAR + FRR) / 2 at the threshold minimizing |FAR - FRR|; the smallest
/// such threshold wins ties.
inline EerResult eer(const ScoreSet &scores) {
  const auto curve = far_frr_curve(scores);
  const OperatingPoint *best = &curve.front();
  for (const auto &p : curve)
    if (std::abs(p.far - p.frr) < std::abs(best->far - best->frr)) best = &p;
  return {100.0 * (best->far + best->frr) / 2.0, best->theta};
}

// ---------------------------------------------------------------------------

struct StatSummary {
  double mean = 0.0;
  double sd = 0.0;  // population convention, divisor n
  std::size_t n = 0;
};

inline StatSummary stat_summary(std::span<const double> values) {
  if (values.empty()) throw ValidationError("stat_summary of an empty list");
  StatSummary s;
  s.n = values.size();
  s.mean = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

inline double pooled_sd(double sd1, double sd2) {
  if (sd1 < 0.0 || sd2 < 0.0) throw ValidationError("standard deviations must be nonnegative");
  return std::sqrt((sd1 * sd1 + sd2 * sd2) / 2.0);
}

inline constexpr double kCriticalT = 1.645;

struct TTest {
  double t = 0.0;            // nonnegative; +inf when the pooled SD is zero and means differ
  bool first_larger = true;  // direction: is a's mean the larger one
  bool significant = false;  // t > kCriticalT
};

/// Equal-n t statistic: difference of means over the pooled SD.
inline TTest t_statistic(const StatSummary &a, const StatSummary &b) {
  if (a.n != b.n) throw ValidationError("t_statistic needs equal sample sizes");
  TTest r;
  r.first_larger = a.mean >= b.mean;
  const double diff = std::abs(a.mean - b.mean);
  const double sp = pooled_sd(a.sd, b.sd);
  if (sp == 0.0) r.t = diff == 0.0 ? 0.0 : kPosInf;
  else r.t = diff / sp;
  r.significant = r.t > kCriticalT;
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct EmotionResult {
  std::string emotion;
  double eer_percent = 0.0;
  double theta = 0.0;
  std::size_t targets = 0;
  std::size_t nontargets = 0;
  std::vector<OperatingPoint> det;
};

/// Per-emotion results for one trial mode. Trials are grouped by the true
/// emotion of the test utterance; errored trials are counted, not scored.
struct ModeResult {
  std::string mode;
  std::vector<EmotionResult> emotions;
  double average_eer = 0.0;
  std::size_t errors = 0;
};

inline ModeResult summarize_trials(const std::vector<std::string> &emotions,
                                   const std::vector<stage_b::TrialRecord> &records, const std::string &mode) {
  std::vector<ScoreSet> sets(emotions.size());
  ModeResult out;
  out.mode = mode;
  for (const auto &r : records) {
    if (!r.error.empty()) {
      ++out.errors;
      continue;
    }
    const auto it = std::find(emotions.begin(), emotions.end(), r.emotion);
    if (it == emotions.end()) throw ValidationError("trial with unknown emotion '" + r.emotion + "'");
    auto &set = sets[static_cast<std::size_t>(it - emotions.begin())];
    (r.truth == stage_b::Truth::target ? set.targets : set.nontargets).push_back(r.lambda);
  }
  double sum = 0.0;
  for (std::size_t e = 0; e < emotions.size(); ++e) {
    sets[e].label = emotions[e];
    EmotionResult er;
    er.emotion = emotions[e];
    er.targets = sets[e].targets.size();
    er.nontargets = sets[e].nontargets.size();
    const auto res = eer(sets[e]);
    er.eer_percent = res.eer_percent;
    er.theta = res.theta;
    er.det = far_frr_curve(sets[e]);
    sum += er.eer_percent;
    out.emotions.push_back(std::move(er));
  }
  out.average_eer = sum / static_cast<double>(emotions.size());
  return out;
}

inline std::vector<double> eer_vector(const ModeResult &r) {
  std::vector<double> v;
  for (const auto &e : r.emotions) v.push_back(e.eer_percent);
  return v;
}

struct Comparison {
  std::string first, second;
  StatSummary a, b;
  TTest test;
};

inline Comparison compare(const ModeResult &first, const ModeResult &second) {
  Comparison c;
  c.first = first.mode;
  c.second = second.mode;
  const auto va = eer_vector(first), vb = eer_vector(second);
  c.a = stat_summary(va);
  c.b = stat_summary(vb);
  c.test = t_statistic(c.a, c.b);
  return c;
}

struct EvalReport {
  std::string kind;
  std::vector<ModeResult> modes;
  std::optional<stage_a::ConfusionMatrix> confusion;
  std::vector<Comparison> comparisons;
  std::vector<std::pair<double, double>> alpha_sweep;  // (alpha, average EER)
  std::vector<std::pair<std::string, std::string>> config;
};

enum class ExperimentKind { two_stage, one_stage, hmm_only_stage_a, worst_case, alpha_sweep };

inline const char *to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::two_stage: return "two_stage";
    case ExperimentKind::one_stage: return "one_stage";
    case ExperimentKind::hmm_only_stage_a: return "hmm_only_stage_a";
    case ExperimentKind::worst_case: return "worst_case";
    case ExperimentKind::alpha_sweep: return "alpha_sweep";
  }
  return "?";
}

inline ExperimentKind parse_experiment(const std::string &s) {
  for (auto k : {ExperimentKind::two_stage, ExperimentKind::one_stage, ExperimentKind::hmm_only_stage_a,
                 ExperimentKind::worst_case, ExperimentKind::alpha_sweep})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown experiment '" + s + "'");
}

struct ExperimentInputs {
  const corpus::CorpusManifest *manifest = nullptr;
  const corpus::FeatureStore *store = nullptr;
  const stage_a::EmotionModelSet *emotion_models = nullptr;
  const stage_b::SpeakerModelSet *speaker_models = nullptr;
};

struct ExperimentConfig {
  stage_b::TrialConfig trials;
  bool fused_stage_b = false;
  std::vector<std::pair<std::string, std::string>> echo;  // extra config to record
};

/// The eleven alpha values 0.0, 0.1, ..., 1.0.
inline std::vector<double> alpha_grid() {
  std::vector<double> a;
  for (int i = 0; i <= 10; ++i) a.push_back(i / 10.0);
  return a;
}

inline EvalReport run_experiment(ExperimentKind kind, const ExperimentInputs &in, const ExperimentConfig &cfg) {
  if (!in.manifest || !in.store || !in.emotion_models || !in.speaker_models)
    throw ValidationError("run_experiment needs manifest, features and both model sets");
  const auto &manifest = *in.manifest;
  const auto &em = *in.emotion_models;
  EvalReport report;
  report.kind = to_string(kind);

  stage_b::CacheContents what;
  what.pooled = kind == ExperimentKind::one_stage;
  const auto cache = stage_b::build_cache(*in.speaker_models, &em, manifest, *in.store, cfg.trials, what);

  auto settings_for = [&](double alpha) {
    stage_b::EvalSettings s;
    s.stage_a_alpha = alpha;
    s.stage_a_mode = stage_a::Mode::sphmm;
    s.scoring.fused = cfg.fused_stage_b;
    s.scoring.alpha = alpha;
    return s;
  };
  auto run_mode = [&](stage_b::TrialMode mode, double alpha) {
    const auto records = stage_b::evaluate_cache(cache, manifest, mode, settings_for(alpha), cfg.trials);
    return summarize_trials(manifest.emotions, records, stage_b::to_string(mode));
  };

  // Stage-a confusion on the test utterances of the plan.
  auto confusion_at = [&](double alpha, stage_a::Mode mode) {
    std::vector<std::pair<std::size_t, std::size_t>> outcomes;
    for (std::size_t i = 0; i < cache.utterances.size(); ++i) {
      const auto &u = manifest.utterances[cache.utterances[i]];
      outcomes.emplace_back(stage_a::decide_emotion(cache.emotion_scores[i], mode, alpha).emotion,
                            manifest.emotion_index(u.emotion));
    }
    return stage_a::confusion(manifest.emotions, outcomes);
  };

  const double alpha = em.alpha;
  switch (kind) {
    case ExperimentKind::two_stage:
      report.modes.push_back(run_mode(stage_b::TrialMode::two_stage, alpha));
      report.modes.push_back(run_mode(stage_b::TrialMode::oracle, alpha));
      report.confusion = confusion_at(alpha, stage_a::Mode::sphmm);
      break;
    case ExperimentKind::one_stage:
      report.modes.push_back(run_mode(stage_b::TrialMode::two_stage, alpha));
      report.modes.push_back(run_mode(stage_b::TrialMode::one_stage, alpha));
      report.comparisons.push_back(compare(report.modes[1], report.modes[0]));
      report.confusion = confusion_at(alpha, stage_a::Mode::sphmm);
      break;
    case ExperimentKind::hmm_only_stage_a:
      report.modes.push_back(run_mode(stage_b::TrialMode::two_stage, alpha));
      report.modes.push_back(run_mode(stage_b::TrialMode::hmm_only, alpha));
      report.comparisons.push_back(compare(report.modes[1], report.modes[0]));
      report.confusion = confusion_at(alpha, stage_a::Mode::hmm_only);
      break;
    case ExperimentKind::worst_case:
      report.modes.push_back(run_mode(stage_b::TrialMode::two_stage, alpha));
      report.modes.push_back(run_mode(stage_b::TrialMode::worst_case, alpha));
      report.comparisons.push_back(compare(report.modes[1], report.modes[0]));
      break;
    case ExperimentKind::alpha_sweep:
      for (double a : alpha_grid()) {
        auto r = run_mode(stage_b::TrialMode::two_stage, a);
        report.alpha_sweep.emplace_back(a, r.average_eer);
      }
      report.modes.push_back(run_mode(stage_b::TrialMode::two_stage, alpha));
      break;
  }

  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  report.config = {{"kind", report.kind},
                   {"alpha", num(alpha)},
                   {"stage_a_mode", stage_a::to_string(em.mode)},
                   {"stage_b_scoring", cfg.fused_stage_b ? "fused" : "acoustic"},
                   {"seed", std::to_string(cfg.trials.seed)},
                   {"nontarget_claims", std::to_string(cfg.trials.nontarget_claims)},
                   {"imposters_only", cfg.trials.imposters_only ? "true" : "false"},
                   {"theta", num(cfg.trials.theta)},
                   {"adapt_window", std::to_string(cfg.trials.adapt_window)}};
  report.config.insert(report.config.end(), cfg.echo.begin(), cfg.echo.end());
  return report;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string fmt(double v, const char *pattern = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

inline void write_eer_csv(std::ostream &out, const EvalReport &r) {
  out << "mode,emotion,eer_percent,theta,targets,nontargets\n";
  for (const auto &m : r.modes) {
    for (const auto &e : m.emotions)
      out << m.mode << ',' << e.emotion << ',' << fmt(e.eer_percent) << ',' << fmt(e.theta, "%.10g") << ','
          << e.targets << ',' << e.nontargets << '\n';
    out << m.mode << ",average," << fmt(m.average_eer) << ",,,\n";
  }
}

inline void write_det_csv(std::ostream &out, const EmotionResult &e) {
  out << "theta,far,frr\n";
  for (const auto &p : e.det) out << fmt(p.theta, "%.10g") << ',' << fmt(p.far, "%.8f") << ',' << fmt(p.frr, "%.8f") << '\n';
}

inline void write_ttest_csv(std::ostream &out, const std::vector<Comparison> &comparisons) {
  out << "first,second,mean_first,sd_first,mean_second,sd_second,n,t,larger,significant\n";
  for (const auto &c : comparisons)
    out << c.first << ',' << c.second << ',' << fmt(c.a.mean, "%.4f") << ',' << fmt(c.a.sd, "%.4f") << ','
        << fmt(c.b.mean, "%.4f") << ',' << fmt(c.b.sd, "%.4f") << ',' << c.a.n << ','
        << fmt(c.test.t, "%.4f") << ',' << (c.test.first_larger ? c.first : c.second) << ','
        << (c.test.significant ? "yes" : "no") << '\n';
}

inline void write_alpha_sweep_csv(std::ostream &out, const EvalReport &r) {
  out << "alpha,average_eer_percent\n";
  for (const auto &[a, e] : r.alpha_sweep) out << fmt(a, "%.1f") << ',' << fmt(e) << '\n';
}

/// key = value lines: config echo first, then headline numbers.
inline void write_summary(std::ostream &out, const EvalReport &r) {
  for (const auto &[k, v] : r.config) out << k << " = " << v << '\n';
  for (const auto &m : r.modes) {
    out << "average_eer." << m.mode << " = " << fmt(m.average_eer) << '\n';
    if (m.errors) out << "errored_trials." << m.mode << " = " << m.errors << '\n';
  }
  if (r.confusion) out << "emotion_accuracy = " << fmt(r.confusion->accuracy()) << '\n';
  for (const auto &c : r.comparisons)
    out << "t." << c.first << "_vs_" << c.second << " = " << fmt(c.test.t, "%.4f")
        << (c.test.significant ? " (significant)" : " (not significant)") << '\n';
}

namespace detail {
template <typename Fn>
void write_file(const std::filesystem::path &path, Fn &&fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  fn(out);
  if (!out) throw Error("write failed for " + path.string());
}
}  // namespace detail

/// eer.csv, det_<mode>_<emotion>.csv, confusion.csv, ttest.csv,
/// alpha_sweep.csv (when present) and summary.txt.
inline void write_report(const std::string &dir, const EvalReport &r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  detail::write_file(d / "eer.csv", [&](std::ostream &o) { write_eer_csv(o, r); });
  for (const auto &m : r.modes)
    for (const auto &e : m.emotions)
      detail::write_file(d / ("det_" + m.mode + "_" + e.emotion + ".csv"),
                         [&](std::ostream &o) { write_det_csv(o, e); });
  if (r.confusion)
    detail::write_file(d / "confusion.csv", [&](std::ostream &o) { stage_a::write_confusion_csv(o, *r.confusion); });
  if (!r.comparisons.empty())
    detail::write_file(d / "ttest.csv", [&](std::ostream &o) { write_ttest_csv(o, r.comparisons); });
  if (!r.alpha_sweep.empty())
    detail::write_file(d / "alpha_sweep.csv", [&](std::ostream &o) { write_alpha_sweep_csv(o, r); });
  detail::write_file(d / "summary.txt", [&](std::ostream &o) { write_summary(o, r); });
}

}  // namespace emoverify::eval
