// emoverify/sphmm.hpp

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

// Suprasegmental HMMs: an acoustic HMM over cepstral frames plus a coarse-rate
// prosodic model whose states each summarize three consecutive acoustic
// states. The two per-frame scores are fused as
//
//   score = (1 - alpha) * acoustic + alpha * prosodic.
//
// alpha = 0 ignores prosody, alpha = 1 ignores the acoustic model.

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "emoverify/frontend.hpp"
#include "emoverify/hmm.hpp"

namespace emoverify::sphmm {

using frontend::ObservationPair;

inline constexpr std::size_t kStatesPerSegment = 3;

/// Prosodic half of the model. `composite_*` is the top-level state that
/// spans every suprasegmental state: a single diagonal Gaussian over the
/// whole-utterance mean prosodic vector.
struct SuprasegmentalModel {
  hmm::HmmModel hmm;
  std::vector<std::size_t> summary_map;  // acoustic state -> suprasegmental state
  bool composite_enabled = true;
  std::vector<double> composite_mean;
  std::vector<double> composite_var;

  std::size_t num_states() const { return hmm.num_states(); }
  bool operator==(const SuprasegmentalModel &) const = default;
};

struct SphmmModel {
  hmm::HmmModel acoustic;
  SuprasegmentalModel prosodic;
  double alpha = 0.5;
  double log_prior_acoustic = 0.0;
  double log_prior_prosodic = 0.0;

  bool operator==(const SphmmModel &) const = default;
};

inline std::size_t suprasegmental_state_count(std::size_t acoustic_states) {
  return (acoustic_states + kStatesPerSegment - 1) / kStatesPerSegment;
}

/// Contiguous blocks of three acoustic states per suprasegmental state.
inline std::vector<std::size_t> make_summary_map(std::size_t acoustic_states) {
  std::vector<std::size_t> map(acoustic_states);
  for (std::size_t i = 0; i < acoustic_states; ++i) map[i] = i / kStatesPerSegment;
  return map;
}

inline void validate(const SphmmModel &model) {
  hmm::require_valid(model.acoustic);
  hmm::require_valid(model.prosodic.hmm);
  if (!(model.alpha >= 0.0 && model.alpha <= 1.0))
    throw ValidationError("alpha must lie in [0, 1]");
  if (!std::isfinite(model.log_prior_acoustic) || !std::isfinite(model.log_prior_prosodic))
    throw ValidationError("log priors must be finite");
  const auto &map = model.prosodic.summary_map;
  const std::size_t ns = model.prosodic.num_states();
  if (map.size() != model.acoustic.num_states())
    throw ValidationError("summary map size differs from acoustic state count");
  if (map.empty() || map.front() != 0 || map.back() + 1 != ns)
    throw ValidationError("summary map is not onto the suprasegmental states");
  for (std::size_t i = 1; i < map.size(); ++i)
    if (map[i] < map[i - 1] || map[i] > map[i - 1] + 1)
      throw ValidationError("summary map is not monotone and contiguous");
  if (model.prosodic.composite_enabled) {
    const std::size_t dp = model.prosodic.hmm.dim();
    if (model.prosodic.composite_mean.size() != dp || model.prosodic.composite_var.size() != dp)
      throw ValidationError("composite state dimension mismatch");
    for (double v : model.prosodic.composite_var)
      if (!(v > 0.0)) throw ValidationError("composite state variance must be positive");
  }
}

/// Whole-utterance mean prosodic vector.
inline std::vector<double> prosodic_mean(const Matrix &prosodic) {
  std::vector<double> m(prosodic.cols(), 0.0);
  for (std::size_t t = 0; t < prosodic.rows(); ++t)
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += prosodic(t, d);
  for (double &v : m) v /= static_cast<double>(prosodic.rows());
  return m;
}

/// Acoustic stream: per-frame log-likelihood plus log P0(lambda) / T.
inline double score_acoustic(const SphmmModel &model, const ObservationPair &obs) {
  const double len = static_cast<double>(obs.acoustic.rows());
  return hmm::avg_frame_ll(model.acoustic, obs.acoustic) + model.log_prior_acoustic / len;
}

/// Composite-state log-density of the utterance mean, spread over T_p.
inline double composite_term(const SuprasegmentalModel &model, const Matrix &prosodic) {
  if (!model.composite_enabled) return 0.0;
  const auto m = prosodic_mean(prosodic);
  return hmm::log_gaussian_diag(m, model.composite_mean, model.composite_var) /
         static_cast<double>(prosodic.rows());
}

/// Prosodic stream: per-block log-likelihood of the suprasegmental HMM, the
/// composite-state term, and log P0(Psi) / T_p.
inline double score_prosodic(const SphmmModel &model, const ObservationPair &obs) {
  const double len = static_cast<double>(obs.prosodic.rows());
  return hmm::avg_frame_ll(model.prosodic.hmm, obs.prosodic) +
         composite_term(model.prosodic, obs.prosodic) + model.log_prior_prosodic / len;
}

inline double fuse(double alpha, double acoustic, double prosodic) {
  return (1.0 - alpha) * acoustic + alpha * prosodic;
}

inline double score_fused(const SphmmModel &model, const ObservationPair &obs) {
  return fuse(model.alpha, score_acoustic(model, obs), score_prosodic(model, obs));
}

struct StreamScores {
  double acoustic;
  double prosodic;
};

inline StreamScores score_streams(const SphmmModel &model, const ObservationPair &obs) {
  return {score_acoustic(model, obs), score_prosodic(model, obs)};
}

// ---------------------------------------------------------------------------

struct SphmmTrainConfig {
  hmm::TrainConfig hmm;
  std::size_t prosodic_mixtures = 2;
  bool composite = true;
};

/// Trains the acoustic HMM on the cepstral streams, then the prosodic model
/// on the block streams, then the composite Gaussian on per-utterance means.
/// The two streams are trained independently.
inline SphmmModel train_sphmm(std::span<const ObservationPair> utterances, std::size_t num_states,
                              std::size_t num_mixtures, double alpha,
                              const SphmmTrainConfig &cfg) {
  if (utterances.empty()) throw ValidationError("no training utterances");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  std::vector<Matrix> acoustic, prosodic;
  for (const auto &u : utterances) {
    frontend::check_observation(u);
    acoustic.push_back(u.acoustic);
    prosodic.push_back(u.prosodic);
  }

  SphmmModel model;
  model.alpha = alpha;
  {
    const auto init = hmm::init_model(acoustic, num_states, num_mixtures, acoustic.front().cols(), cfg.hmm);
    model.acoustic = hmm::train_baum_welch(init, acoustic, cfg.hmm).model;
  }
  {
    hmm::TrainConfig pcfg = cfg.hmm;
    pcfg.seed = derive_seed(cfg.hmm.seed, "prosodic");
    const std::size_t ns = suprasegmental_state_count(num_states);
    const auto init = hmm::init_model(prosodic, ns, cfg.prosodic_mixtures, prosodic.front().cols(), pcfg);
    model.prosodic.hmm = hmm::train_baum_welch(init, prosodic, pcfg).model;
  }
  model.prosodic.summary_map = make_summary_map(num_states);
  model.prosodic.composite_enabled = cfg.composite;
  if (cfg.composite) {
    const std::size_t dp = prosodic.front().cols();
    std::vector<std::vector<double>> means;
    // Canonical order keeps the sums independent of the caller's ordering.
    for (std::size_t u : hmm::detail::canonical_order(prosodic)) means.push_back(prosodic_mean(prosodic[u]));
    model.prosodic.composite_mean.assign(dp, 0.0);
    model.prosodic.composite_var.assign(dp, 0.0);
    for (const auto &m : means)
      for (std::size_t d = 0; d < dp; ++d) model.prosodic.composite_mean[d] += m[d];
    for (double &v : model.prosodic.composite_mean) v /= static_cast<double>(means.size());
    for (const auto &m : means)
      for (std::size_t d = 0; d < dp; ++d) {
        const double diff = m[d] - model.prosodic.composite_mean[d];
        model.prosodic.composite_var[d] += diff * diff;
      }
    for (double &v : model.prosodic.composite_var)
      v = std::max(v / static_cast<double>(means.size()), cfg.hmm.variance_floor);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Serialization: "EVSP", version, alpha, log priors (acoustic, prosodic),
// composite flag, N, summary map (N x u32), D_p, composite mean and variance
// (D_p f64 each, zeros when disabled), then the acoustic and prosodic HMMs
// in the hmm module's format.

inline constexpr std::uint32_t kSphmmFormatVersion = 1;

inline void write_model(io::BinaryWriter &w, const SphmmModel &model) {
  w.magic("EVSP");
  w.u32(kSphmmFormatVersion);
  w.f64(model.alpha);
  w.f64(model.log_prior_acoustic);
  w.f64(model.log_prior_prosodic);
  w.u32(model.prosodic.composite_enabled ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.prosodic.summary_map.size()));
  for (std::size_t s : model.prosodic.summary_map) w.u32(static_cast<std::uint32_t>(s));
  const std::size_t dp = model.prosodic.hmm.dim();
  w.u32(static_cast<std::uint32_t>(dp));
  std::vector<double> mean = model.prosodic.composite_mean, var = model.prosodic.composite_var;
  mean.resize(dp, 0.0);
  var.resize(dp, 0.0);
  w.f64s(mean);
  w.f64s(var);
  hmm::write_model(w, model.acoustic);
  hmm::write_model(w, model.prosodic.hmm);
}

inline SphmmModel read_model(io::BinaryReader &r) {
  r.expect_magic("EVSP");
  if (const auto v = r.u32(); v != kSphmmFormatVersion)
    throw FormatError("unsupported SPHMM format version " + std::to_string(v));
  SphmmModel model;
  model.alpha = r.f64();
  model.log_prior_acoustic = r.f64();
  model.log_prior_prosodic = r.f64();
  model.prosodic.composite_enabled = r.u32() != 0;
  const std::size_t n = r.u32();
  if (n > 4096) throw FormatError("implausible SPHMM header");
  model.prosodic.summary_map.resize(n);
  for (auto &s : model.prosodic.summary_map) s = r.u32();
  const std::size_t dp = r.u32();
  if (dp > 4096) throw FormatError("implausible SPHMM header");
  std::vector<double> mean(dp), var(dp);
  r.f64s(mean);
  r.f64s(var);
  if (model.prosodic.composite_enabled) {
    model.prosodic.composite_mean = std::move(mean);
    model.prosodic.composite_var = std::move(var);
  }
  model.acoustic = hmm::read_model(r);
  model.prosodic.hmm = hmm::read_model(r);
  return model;
}

inline void save_model(const std::string &path, const SphmmModel &model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  io::BinaryWriter w(out);
  write_model(w, model);
}

inline SphmmModel load_model(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  io::BinaryReader r(in, path);
  SphmmModel model = read_model(r);
  r.expect_end();
  validate(model);
  return model;
}

}  // namespace emoverify::sphmm
