// emoverify/corpus.hpp

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

// Corpus manifests, sentence-group train/test splits, feature-stream files
// and the seeded synthetic corpus generator.
//
// Manifest file layout (UTF-8, one record per line):
//
//   # emotions: neutral,angry,sad,happy,disgust,fear
//   # audio: 16000,16
//   id,source,speaker,emotion,sentence_group,repetition,split,role
//   S01_neutral_s1_r1,wav/S01_neutral_s1_r1.wav,S01,neutral,1,1,train,claimant
//   ...
//
// The "# emotions:" directive is required and fixes the emotion order used
// everywhere downstream. Other lines starting with '#' are ignored.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emoverify/binary_io.hpp"
#include "emoverify/frontend.hpp"
#include "emoverify/hmm.hpp"

namespace emoverify::corpus {

using frontend::ObservationPair;

enum class Split { train, test };
enum class Role { claimant, imposter };

inline const char *to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline const char *to_string(Role r) { return r == Role::claimant ? "claimant" : "imposter"; }

struct UtteranceRef {
  std::string id;
  std::string source;  // file path, or "synth:<seed>"
  std::string speaker;
  std::string emotion;
  int sentence_group = 1;
  int repetition = 1;
  Split split = Split::train;
  Role role = Role::claimant;

  bool operator==(const UtteranceRef &) const = default;
};

struct AudioFormat {
  int sample_rate = 16000;
  int bits = 16;
  bool operator==(const AudioFormat &) const = default;
};

struct CorpusManifest {
  std::vector<std::string> emotions;
  std::vector<UtteranceRef> utterances;
  AudioFormat audio;

  /// Speakers in order of first appearance.
  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto &u : utterances)
      if (seen.insert(u.speaker).second) out.push_back(u.speaker);
    return out;
  }

  std::vector<std::string> speakers_with_role(Role role) const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto &u : utterances)
      if (u.role == role && seen.insert(u.speaker).second) out.push_back(u.speaker);
    return out;
  }

  std::size_t emotion_index(const std::string &label) const {
    const auto it = std::find(emotions.begin(), emotions.end(), label);
    if (it == emotions.end()) throw ValidationError("unknown emotion '" + label + "'");
    return static_cast<std::size_t>(it - emotions.begin());
  }

  std::vector<const UtteranceRef *> select(Split split) const {
    std::vector<const UtteranceRef *> out;
    for (const auto &u : utterances)
      if (u.split == split) out.push_back(&u);
    return out;
  }

  bool operator==(const CorpusManifest &) const = default;
};

/// Checks every manifest invariant. Errors name the offending utterance,
/// speaker or sentence group.
inline void validate_manifest(const CorpusManifest &m) {
  auto name = [](const UtteranceRef &u) { return "utterance '" + u.id + "'"; };
  if (m.emotions.size() < 2) throw ValidationError("emotion set needs at least 2 labels");
  std::set<std::string> labels(m.emotions.begin(), m.emotions.end());
  if (labels.size() != m.emotions.size()) throw ValidationError("duplicate emotion label");

  std::set<std::string> ids;
  std::map<std::string, Role> roles;
  std::map<int, std::set<Split>> group_splits;
  for (const auto &u : m.utterances) {
    if (u.id.empty()) throw ValidationError("utterance with empty id");
    if (!ids.insert(u.id).second) throw ValidationError("duplicate id '" + u.id + "'");
    if (!labels.count(u.emotion))
      throw ValidationError(name(u) + ": emotion '" + u.emotion + "' not in declared set");
    if (u.speaker.empty()) throw ValidationError(name(u) + ": empty speaker");
    const auto [it, fresh] = roles.emplace(u.speaker, u.role);
    if (!fresh && it->second != u.role)
      throw ValidationError("speaker '" + u.speaker + "' is listed as both claimant and imposter");
    group_splits[u.sentence_group].insert(u.split);
  }
  for (const auto &[group, splits] : group_splits)
    if (splits.size() > 1)
      throw ValidationError("sentence group " + std::to_string(group) +
                            " appears in both train and test splits");

  // Every claimant needs train and test material in every emotion.
  std::map<std::pair<std::string, std::string>, std::set<Split>> cover;
  for (const auto &u : m.utterances)
    if (u.role == Role::claimant) cover[{u.speaker, u.emotion}].insert(u.split);
  for (const auto &[speaker, role] : roles) {
    if (role != Role::claimant) continue;
    for (const auto &e : m.emotions) {
      const auto it = cover.find({speaker, e});
      if (it == cover.end() || it->second.size() != 2)
        throw ValidationError("claimant '" + speaker + "' lacks train or test utterances for '" +
                              e + "'");
    }
  }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline int parse_int(const std::string &text, const std::string &what, std::size_t line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception &) {
    throw FormatError("line " + std::to_string(line) + ": bad " + what + " '" + text + "'");
  }
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline constexpr const char *kManifestHeader =
    "id,source,speaker,emotion,sentence_group,repetition,split,role";

}  // namespace detail

inline CorpusManifest parse_manifest(std::istream &in, const std::string &name = "manifest") {
  CorpusManifest m;
  bool have_emotions = false, have_header = false;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::strip_cr(raw);
    const std::string where = name + ":" + std::to_string(line_no);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(1);
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      auto key = body.substr(0, colon);
      auto value = body.substr(colon + 1);
      key.erase(0, key.find_first_not_of(' '));
      value.erase(0, value.find_first_not_of(' '));
      if (key == "emotions") {
        m.emotions = detail::split_csv(value);
        have_emotions = true;
      } else if (key == "audio") {
        const auto parts = detail::split_csv(value);
        if (parts.size() != 2) throw FormatError(where + ": audio directive needs rate,bits");
        m.audio.sample_rate = detail::parse_int(parts[0], "sample rate", line_no);
        m.audio.bits = detail::parse_int(parts[1], "bit depth", line_no);
      }
      continue;
    }
    if (!have_header) {
      if (line != detail::kManifestHeader)
        throw FormatError(where + ": expected header '" + detail::kManifestHeader + "'");
      have_header = true;
      continue;
    }
    const auto cells = detail::split_csv(line);
    if (cells.size() != 8)
      throw FormatError(where + ": expected 8 columns, got " + std::to_string(cells.size()));
    UtteranceRef u;
    u.id = cells[0];
    u.source = cells[1];
    u.speaker = cells[2];
    u.emotion = cells[3];
    u.sentence_group = detail::parse_int(cells[4], "sentence_group", line_no);
    u.repetition = detail::parse_int(cells[5], "repetition", line_no);
    if (cells[6] == "train") u.split = Split::train;
    else if (cells[6] == "test") u.split = Split::test;
    else throw FormatError(where + ": bad split '" + cells[6] + "'");
    if (cells[7] == "claimant") u.role = Role::claimant;
    else if (cells[7] == "imposter") u.role = Role::imposter;
    else throw FormatError(where + ": bad role '" + cells[7] + "'");
    if (have_emotions && std::find(m.emotions.begin(), m.emotions.end(), u.emotion) == m.emotions.end())
      throw ValidationError(where + ": utterance '" + u.id + "' has emotion '" + u.emotion +
                            "' outside the declared set");
    m.utterances.push_back(std::move(u));
  }
  if (!have_emotions) throw FormatError(name + ": missing '# emotions:' directive");
  if (!have_header) throw FormatError(name + ": missing header line");
  validate_manifest(m);
  return m;
}

inline CorpusManifest load_manifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  return parse_manifest(in, path);
}

inline void write_manifest(std::ostream &out, const CorpusManifest &m) {
  out << "# emotions: ";
  for (std::size_t i = 0; i < m.emotions.size(); ++i) out << (i ? "," : "") << m.emotions[i];
  out << "\n# audio: " << m.audio.sample_rate << "," << m.audio.bits << "\n";
  out << detail::kManifestHeader << "\n";
  for (const auto &u : m.utterances)
    out << u.id << ',' << u.source << ',' << u.speaker << ',' << u.emotion << ','
        << u.sentence_group << ',' << u.repetition << ',' << to_string(u.split) << ','
        << to_string(u.role) << '\n';
}

inline void save_manifest(const std::string &path, const CorpusManifest &m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_manifest(out, m);
}

/// Reassigns splits by sentence group: train iff the group is in
/// `train_groups`. Every group then lives in exactly one split.
inline CorpusManifest split_by_sentence(const CorpusManifest &manifest,
                                        const std::set<int> &train_groups) {
  if (train_groups.empty()) throw ValidationError("train_groups is empty");
  std::set<int> observed;
  for (const auto &u : manifest.utterances) observed.insert(u.sentence_group);
  for (int g : train_groups)
    if (!observed.count(g))
      throw ValidationError("train group " + std::to_string(g) + " does not occur in the manifest");
  if (train_groups.size() == observed.size())
    throw ValidationError("train_groups covers every sentence group; test split would be empty");
  CorpusManifest out = manifest;
  for (auto &u : out.utterances)
    u.split = train_groups.count(u.sentence_group) ? Split::train : Split::test;
  return out;
}

// ---------------------------------------------------------------------------
// Feature-stream files: "EVFS", version, T, D, T_p, D_p (u32), then the
// acoustic matrix and the prosodic matrix, row-major little-endian f64.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline void write_features(std::ostream &out, const ObservationPair &obs) {
  io::BinaryWriter w(out);
  w.magic("EVFS");
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(obs.acoustic.rows()));
  w.u32(static_cast<std::uint32_t>(obs.acoustic.cols()));
  w.u32(static_cast<std::uint32_t>(obs.prosodic.rows()));
  w.u32(static_cast<std::uint32_t>(obs.prosodic.cols()));
  w.f64s(obs.acoustic.data());
  w.f64s(obs.prosodic.data());
}

inline ObservationPair read_features(std::istream &in, const std::string &name, std::string source) {
  io::BinaryReader r(in, name);
  r.expect_magic("EVFS");
  if (const auto v = r.u32(); v != kFeatureFormatVersion)
    throw FormatError(name + ": unsupported feature format version " + std::to_string(v));
  const std::size_t t = r.u32(), d = r.u32(), tp = r.u32(), dp = r.u32();
  if (d > 4096 || dp > 4096 || t > (1u << 26) || tp > (1u << 26))
    throw FormatError(name + ": implausible feature header");
  ObservationPair obs;
  obs.acoustic = Matrix(t, d);
  r.f64s(obs.acoustic.data());
  obs.prosodic = Matrix(tp, dp);
  r.f64s(obs.prosodic.data());
  r.expect_end();
  obs.voiced = frontend::voicing_flags(obs.prosodic);
  obs.source = std::move(source);
  return obs;
}

inline std::string feature_path(const std::string &dir, const std::string &id) {
  return (std::filesystem::path(dir) / (id + ".evf")).string();
}

inline void save_features(const std::string &path, const ObservationPair &obs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_features(out, obs);
}

inline ObservationPair load_features(const std::string &path, std::string source) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_features(in, path, std::move(source));
}

/// Features keyed by utterance id.
using FeatureStore = std::map<std::string, ObservationPair>;

inline FeatureStore load_feature_store(const CorpusManifest &m, const std::string &dir,
                                       unsigned workers = 1) {
  std::vector<ObservationPair> loaded(m.utterances.size());
  parallel_for(m.utterances.size(), workers, [&](std::size_t i) {
    loaded[i] = load_features(feature_path(dir, m.utterances[i].id), m.utterances[i].id);
  });
  FeatureStore store;
  for (std::size_t i = 0; i < loaded.size(); ++i) store.emplace(m.utterances[i].id, std::move(loaded[i]));
  return store;
}

inline const ObservationPair &features_of(const FeatureStore &store, const std::string &id) {
  const auto it = store.find(id);
  if (it == store.end()) throw Error("no features for utterance '" + id + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Corpus layouts

/// Speakers x emotions x sentence groups x repetitions.
struct CorpusLayout {
  std::vector<std::string> emotions;
  std::vector<std::string> speakers;
  std::vector<Role> roles;  // parallel to speakers
  int sentence_groups = 8;
  int repetitions = 9;
  std::set<int> train_groups{1, 2, 3, 4};
};

inline const std::vector<std::string> &default_emotions() {
  static const std::vector<std::string> labels{"neutral", "angry", "sad", "happy", "disgust", "fear"};
  return labels;
}

inline CorpusLayout make_layout(std::size_t num_speakers, std::size_t num_claimants,
                                int sentence_groups, int repetitions, std::set<int> train_groups,
                                std::vector<std::string> emotions = default_emotions()) {
  CorpusLayout layout;
  layout.emotions = std::move(emotions);
  for (std::size_t s = 0; s < num_speakers; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%02zu", s + 1);
    layout.speakers.push_back(buf);
    layout.roles.push_back(s < num_claimants ? Role::claimant : Role::imposter);
  }
  layout.sentence_groups = sentence_groups;
  layout.repetitions = repetitions;
  layout.train_groups = std::move(train_groups);
  return layout;
}

inline std::string utterance_id(const std::string &speaker, const std::string &emotion, int group,
                                int rep) {
  return speaker + "_" + emotion + "_s" + std::to_string(group) + "_r" + std::to_string(rep);
}

/// Manifest enumerating every cell of the layout; `source(id)` fills the
/// source column.
template <typename SourceFn>
CorpusManifest layout_manifest(const CorpusLayout &layout, SourceFn &&source) {
  CorpusManifest m;
  m.emotions = layout.emotions;
  for (std::size_t s = 0; s < layout.speakers.size(); ++s)
    for (const auto &e : layout.emotions)
      for (int g = 1; g <= layout.sentence_groups; ++g)
        for (int r = 1; r <= layout.repetitions; ++r) {
          UtteranceRef u;
          u.id = utterance_id(layout.speakers[s], e, g, r);
          u.source = source(u.id);
          u.speaker = layout.speakers[s];
          u.emotion = e;
          u.sentence_group = g;
          u.repetition = r;
          u.split = layout.train_groups.count(g) ? Split::train : Split::test;
          u.role = layout.roles[s];
          m.utterances.push_back(std::move(u));
        }
  validate_manifest(m);
  return m;
}

/// 40 speakers (34 claimants, 6 imposters) x 6 emotions x 8 sentences x 9
/// repetitions; sentences 1-4 train, 5-8 test.
inline CorpusManifest reference_protocol_manifest() {
  return layout_manifest(make_layout(40, 34, 8, 9, {1, 2, 3, 4}),
                         [](const std::string &id) { return "wav/" + id + ".wav"; });
}

// ---------------------------------------------------------------------------
// Synthetic corpus

/// Generating models for one (speaker, emotion) cell.
struct GeneratorPair {
  hmm::HmmModel acoustic;
  hmm::HmmModel prosodic;
};

struct SyntheticSpec {
  CorpusLayout layout;
  std::vector<GeneratorPair> generators;  // index: speaker * num_emotions + emotion
  double separability = 1.0;             // scales deviations from the cross-cell mean
  std::size_t min_frames = 40;
  std::size_t max_frames = 80;
  int block_size = 10;
  std::uint64_t seed = 1;

  const GeneratorPair &generator(std::size_t speaker, std::size_t emotion) const {
    return generators[speaker * layout.emotions.size() + emotion];
  }
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  FeatureStore features;
};

namespace detail {

/// Pulls every generator's means toward the cross-generator mean of the
/// same (state, component, dim) slot by factor `scale`.
inline void apply_separability(std::vector<hmm::HmmModel *> models, double scale) {
  if (scale == 1.0 || models.empty()) return;
  const hmm::HmmModel &ref = *models.front();
  for (std::size_t s = 0; s < ref.num_states(); ++s) {
    for (std::size_t k = 0; k < ref.num_mixtures(); ++k) {
      for (std::size_t d = 0; d < ref.dim(); ++d) {
        double centre = 0.0;
        for (const auto *m : models) centre += m->states[s].means(k, d);
        centre /= static_cast<double>(models.size());
        for (auto *m : models) {
          double &mu = m->states[s].means(k, d);
          mu = centre + scale * (mu - centre);
        }
      }
    }
  }
}

inline void check_same_shape(const std::vector<hmm::HmmModel *> &models, const char *stream) {
  for (const auto *m : models) {
    hmm::require_valid(*m);
    if (m->num_states() != models.front()->num_states() ||
        m->num_mixtures() != models.front()->num_mixtures() || m->dim() != models.front()->dim())
      throw ValidationError(std::string("synthetic ") + stream +
                            " generators must share N, M and D");
  }
}

}  // namespace detail

/// Samples every utterance of the layout from its cell's generators. Each
/// utterance uses a seed derived from (master seed, id), so output does not
/// depend on the worker count.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec &spec, unsigned workers = 1) {
  const std::size_t ne = spec.layout.emotions.size(), ns = spec.layout.speakers.size();
  if (spec.generators.size() != ne * ns)
    throw ValidationError("synthetic corpus needs one generator pair per (speaker, emotion)");
  if (!(spec.separability >= 0.0)) throw ValidationError("separability scale must be >= 0");
  if (spec.min_frames < 1 || spec.max_frames < spec.min_frames)
    throw ValidationError("invalid utterance length range");
  if (spec.block_size < 1) throw ValidationError("block size must be >= 1");
  if (spec.layout.roles.size() != ns) throw ValidationError("layout roles/speakers mismatch");

  std::vector<GeneratorPair> gens = spec.generators;
  std::vector<hmm::HmmModel *> acoustic, prosodic;
  for (auto &g : gens) {
    acoustic.push_back(&g.acoustic);
    prosodic.push_back(&g.prosodic);
  }
  detail::check_same_shape(acoustic, "acoustic");
  detail::check_same_shape(prosodic, "prosodic");
  detail::apply_separability(acoustic, spec.separability);
  detail::apply_separability(prosodic, spec.separability);

  SyntheticCorpus out;
  out.manifest = layout_manifest(spec.layout, [&](const std::string &id) {
    return "synth:" + std::to_string(derive_seed(spec.seed, id));
  });
  const auto &utts = out.manifest.utterances;
  std::vector<ObservationPair> sampled(utts.size());
  std::map<std::string, std::size_t> speaker_index;
  for (std::size_t s = 0; s < ns; ++s) speaker_index[spec.layout.speakers[s]] = s;

  parallel_for(utts.size(), workers, [&](std::size_t i) {
    const UtteranceRef &u = utts[i];
    const std::uint64_t seed = derive_seed(spec.seed, u.id);
    Rng rng(seed);
    const std::size_t len = spec.min_frames + rng.index(spec.max_frames - spec.min_frames + 1);
    const GeneratorPair &g =
        gens[speaker_index.at(u.speaker) * ne + out.manifest.emotion_index(u.emotion)];
    ObservationPair obs;
    obs.acoustic = hmm::sample_sequence(g.acoustic, len, derive_seed(seed, "acoustic"));
    obs.prosodic = hmm::sample_sequence(g.prosodic, frontend::num_blocks(len, spec.block_size),
                                        derive_seed(seed, "prosodic"));
    obs.voiced = frontend::voicing_flags(obs.prosodic);
    obs.source = u.id;
    sampled[i] = std::move(obs);
  });
  for (std::size_t i = 0; i < utts.size(); ++i) out.features.emplace(utts[i].id, std::move(sampled[i]));
  return out;
}

/// How strongly each factor moves one stream's emission means.
struct StreamDesign {
  std::size_t states = 6;
  std::size_t mixtures = 2;
  std::size_t dim = 13;
  double state_spread = 2.0;        // separation between states/components
  double speaker_effect = 1.0;      // shared across a speaker's emotions
  double emotion_effect = 1.0;      // shared across speakers
  double interaction_effect = 1.0;  // specific to one (speaker, emotion) cell
  double noise_sd = 1.0;
  double self_loop = 0.8;
};

struct SyntheticDesign {
  CorpusLayout layout;
  StreamDesign acoustic;
  StreamDesign prosodic{2, 1, frontend::kProsodicDim, 1.0, 0.2, 2.0, 0.2, 1.0, 0.6};
  double separability = 1.0;
  std::size_t min_frames = 40;
  std::size_t max_frames = 80;
  int block_size = 10;
  std::uint64_t seed = 1;
};

namespace detail {

/// Mean of slot (state, component, dim) for a cell: a base pattern plus
/// speaker, emotion and cell offsets, each a seeded standard normal scaled by
/// its effect size.
inline std::vector<hmm::HmmModel> design_stream(const StreamDesign &d, std::size_t speakers,
                                                std::size_t emotions, std::uint64_t seed) {
  if (d.states == 0 || d.mixtures == 0 || d.dim == 0) throw ValidationError("empty stream design");
  if (!(d.noise_sd > 0.0)) throw ValidationError("noise_sd must be positive");
  if (!(d.self_loop >= 0.0 && d.self_loop < 1.0)) throw ValidationError("self_loop must be in [0, 1)");
  const std::size_t slots = d.states * d.mixtures * d.dim;
  auto draw = [&](std::size_t count, std::uint64_t s) {
    Rng rng(s);
    std::vector<double> v(count);
    for (double &x : v) x = rng.normal();
    return v;
  };
  const auto base = draw(slots, derive_seed(seed, "base"));
  const auto spk = draw(speakers * d.states * d.dim, derive_seed(seed, "speaker"));
  const auto emo = draw(emotions * d.states * d.dim, derive_seed(seed, "emotion"));
  const auto cell = draw(speakers * emotions * d.states * d.dim, derive_seed(seed, "cell"));

  std::vector<hmm::HmmModel> out;
  for (std::size_t s = 0; s < speakers; ++s) {
    for (std::size_t e = 0; e < emotions; ++e) {
      hmm::HmmModel m;
      m.transitions = Matrix(d.states, d.states);
      for (std::size_t i = 0; i < d.states; ++i) {
        if (i + 1 == d.states) {
          m.transitions(i, i) = 1.0;
        } else {
          m.transitions(i, i) = d.self_loop;
          m.transitions(i, i + 1) = 1.0 - d.self_loop;
        }
      }
      for (std::size_t q = 0; q < d.states; ++q) {
        hmm::GmmEmission g;
        g.weights.assign(d.mixtures, 1.0 / static_cast<double>(d.mixtures));
        g.means = Matrix(d.mixtures, d.dim);
        g.variances = Matrix(d.mixtures, d.dim, d.noise_sd * d.noise_sd);
        for (std::size_t k = 0; k < d.mixtures; ++k) {
          for (std::size_t x = 0; x < d.dim; ++x) {
            const std::size_t sd = q * d.dim + x;
            g.means(k, x) = d.state_spread * base[(q * d.mixtures + k) * d.dim + x] +
                            d.speaker_effect * spk[s * d.states * d.dim + sd] +
                            d.emotion_effect * emo[e * d.states * d.dim + sd] +
                            d.interaction_effect * cell[(s * emotions + e) * d.states * d.dim + sd];
          }
        }
        m.states.push_back(std::move(g));
      }
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace detail

inline SyntheticSpec make_synthetic_spec(const SyntheticDesign &design) {
  const std::size_t ns = design.layout.speakers.size(), ne = design.layout.emotions.size();
  const auto acoustic = detail::design_stream(design.acoustic, ns, ne, derive_seed(design.seed, "acoustic"));
  const auto prosodic = detail::design_stream(design.prosodic, ns, ne, derive_seed(design.seed, "prosodic"));
  SyntheticSpec spec;
  spec.layout = design.layout;
  for (std::size_t i = 0; i < acoustic.size(); ++i) spec.generators.push_back({acoustic[i], prosodic[i]});
  spec.separability = design.separability;
  spec.min_frames = design.min_frames;
  spec.max_frames = design.max_frames;
  spec.block_size = design.block_size;
  spec.seed = design.seed;
  return spec;
}

/// Default synthetic corpus: 10 speakers (8 claimants, 2 imposters) x 6
/// emotions x 8 sentence groups x 5 repetitions, groups 1-4 for training.
/// Acoustic means carry speaker identity mostly through speaker-emotion
/// interactions; the prosodic stream separates emotions more strongly than
/// the acoustic one.
inline SyntheticDesign benchmark_design(std::uint64_t seed, double separability = 1.0) {
  SyntheticDesign d;
  d.layout = make_layout(10, 8, 8, 5, {1, 2, 3, 4});
  d.acoustic = {6, 2, 13, 2.0, 0.5, 0.6, 1.0, 1.0, 0.8};
  d.prosodic = {2, 1, frontend::kProsodicDim, 1.0, 0.2, 2.0, 0.2, 1.0, 0.6};
  d.separability = separability;
  d.min_frames = 40;
  d.max_frames = 80;
  d.block_size = 10;
  d.seed = seed;
  return d;
}

}  // namespace emoverify::corpus
