// tools/emoverify.cpp

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

// Command-line driver. Every subcommand writes a key = value echo of its
// configuration next to its outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "emoverify/eval.hpp"

namespace fs = std::filesystem;
using namespace emoverify;

namespace {

struct Options {
  std::string manifest;
  std::string features_dir;
  std::string models_dir;
  std::string report_dir;
  double alpha = 0.5;
  std::size_t states = 6;
  std::size_t mixtures = 2;
  std::string mode = "two_stage";
  std::uint64_t seed = 0;
  unsigned workers = 1;
  double separability = 1.0;
  double theta = 0.0;
  std::size_t adapt_window = 0;
  std::size_t nontarget_claims = 1;
  bool imposters_only = false;
  bool fused_stage_b = false;
  bool no_composite = false;
  std::vector<std::string> ttest_files;
};

using Echo = std::vector<std::pair<std::string, std::string>>;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_echo(const std::string &dir, const std::string &command, const Echo &echo) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / ("config_" + command + ".txt"), std::ios::binary);
  out << "command = " << command << '\n';
  for (const auto &[k, v] : echo) out << k << " = " << v << '\n';
  if (!out) throw Error("cannot write config echo in " + dir);
}

std::string emotion_dir(const Options &o) { return (fs::path(o.models_dir) / "emotions").string(); }
std::string speaker_dir(const Options &o) { return (fs::path(o.models_dir) / "speakers").string(); }

/// Features of the utterances in one split (or all when `split` is empty).
corpus::FeatureStore load_split(const corpus::CorpusManifest &m, const std::string &dir,
                                std::optional<corpus::Split> split, unsigned workers) {
  corpus::CorpusManifest subset = m;
  if (split) std::erase_if(subset.utterances, [&](const corpus::UtteranceRef &u) { return u.split != *split; });
  return corpus::load_feature_store(subset, dir, workers);
}

sphmm::SphmmTrainConfig train_config(const Options &o) {
  sphmm::SphmmTrainConfig c;
  c.hmm.seed = o.seed;
  c.composite = !o.no_composite;
  return c;
}

Echo model_echo(const Options &o) {
  return {{"manifest", o.manifest},  {"features_dir", o.features_dir}, {"models_dir", o.models_dir},
          {"alpha", num(o.alpha)},   {"states", std::to_string(o.states)},
          {"mixtures", std::to_string(o.mixtures)}, {"composite", o.no_composite ? "false" : "true"},
          {"seed", std::to_string(o.seed)}};
}

int cmd_features(const Options &o) {
  const auto m = corpus::load_manifest(o.manifest);
  const fs::path base = fs::path(o.manifest).parent_path();
  frontend::FrontendConfig fc;
  fs::create_directories(o.features_dir);
  parallel_for(m.utterances.size(), o.workers, [&](std::size_t i) {
    const auto &u = m.utterances[i];
    const fs::path src = fs::path(u.source).is_absolute() ? fs::path(u.source) : base / u.source;
    const auto clip = frontend::load_wav(src.string());
    if (clip.sample_rate != m.audio.sample_rate)
      throw ValidationError(u.id + ": sample rate " + std::to_string(clip.sample_rate) + " differs from manifest " +
                            std::to_string(m.audio.sample_rate));
    corpus::save_features(corpus::feature_path(o.features_dir, u.id), frontend::extract(clip, fc, u.id));
  });
  write_echo(o.features_dir, "features",
             {{"manifest", o.manifest}, {"utterances", std::to_string(m.utterances.size())}});
  std::cout << "extracted " << m.utterances.size() << " utterances\n";
  return 0;
}

int cmd_synth(const Options &o) {
  const auto design = corpus::benchmark_design(o.seed, o.separability);
  const auto c = corpus::generate_synthetic(corpus::make_synthetic_spec(design), o.workers);
  fs::create_directories(o.features_dir);
  for (const auto &[id, obs] : c.features) corpus::save_features(corpus::feature_path(o.features_dir, id), obs);
  if (const auto parent = fs::path(o.manifest).parent_path(); !parent.empty()) fs::create_directories(parent);
  corpus::save_manifest(o.manifest, c.manifest);
  write_echo(o.features_dir, "synth",
             {{"manifest", o.manifest}, {"seed", std::to_string(o.seed)}, {"separability", num(o.separability)},
              {"utterances", std::to_string(c.manifest.utterances.size())}});
  std::cout << "synthesized " << c.manifest.utterances.size() << " utterances\n";
  return 0;
}

int cmd_train_emotions(const Options &o) {
  const auto m = corpus::load_manifest(o.manifest);
  const auto store = load_split(m, o.features_dir, corpus::Split::train, o.workers);
  stage_a::TrainConfig cfg;
  cfg.states = o.states;
  cfg.mixtures = o.mixtures;
  cfg.alpha = o.alpha;
  cfg.mode = o.mode == "hmm_only" ? stage_a::Mode::hmm_only : stage_a::Mode::sphmm;
  cfg.sphmm = train_config(o);
  cfg.workers = o.workers;
  const auto set = stage_a::train_emotion_models(m, store, cfg);
  stage_a::save_model_set(emotion_dir(o), set);
  auto echo = model_echo(o);
  echo.emplace_back("stage_a_mode", stage_a::to_string(cfg.mode));
  for (std::size_t e = 0; e < set.size(); ++e)
    echo.emplace_back("pooled." + set.emotions[e], std::to_string(set.pooled_counts[e]));
  write_echo(emotion_dir(o), "train-emotions", echo);
  for (std::size_t e = 0; e < set.size(); ++e)
    std::cout << set.emotions[e] << ": " << set.pooled_counts[e] << " training utterances\n";
  return 0;
}

int cmd_train_speakers(const Options &o) {
  const auto m = corpus::load_manifest(o.manifest);
  const auto store = load_split(m, o.features_dir, corpus::Split::train, o.workers);
  stage_b::EnrollConfig cfg;
  cfg.states = o.states;
  cfg.mixtures = o.mixtures;
  cfg.pooled_mixtures = o.mixtures;
  cfg.alpha = o.alpha;
  cfg.sphmm = train_config(o);
  cfg.workers = o.workers;
  const auto set = stage_b::enroll(m, store, cfg);
  stage_b::save_model_set(speaker_dir(o), set);
  write_echo(speaker_dir(o), "train-speakers", model_echo(o));
  std::cout << "enrolled " << set.speakers.size() << " speakers x " << set.emotions.size() << " emotions\n";
  return 0;
}

stage_a::EmotionModelSet load_emotions(const Options &o, const CLI::App &cmd) {
  auto set = stage_a::load_model_set(emotion_dir(o));
  if (cmd.count("--alpha")) set.alpha = o.alpha;
  if (cmd.count("--mode") && o.mode == "hmm_only") set.mode = stage_a::Mode::hmm_only;
  return set;
}

int cmd_identify(const Options &o, const CLI::App &cmd) {
  const auto m = corpus::load_manifest(o.manifest);
  const auto store = load_split(m, o.features_dir, corpus::Split::test, o.workers);
  const auto set = load_emotions(o, cmd);
  const auto test = m.select(corpus::Split::test);
  std::vector<stage_a::Identification> ids(test.size());
  parallel_for(test.size(), o.workers,
               [&](std::size_t i) { ids[i] = stage_a::identify_emotion(set, corpus::features_of(store, test[i]->id)); });
  fs::create_directories(o.report_dir);
  std::ofstream out(fs::path(o.report_dir) / "identify.csv", std::ios::binary);
  out << "utterance,true,predicted";
  for (const auto &e : set.emotions) out << ",score_" << e;
  out << '\n';
  std::vector<std::pair<std::size_t, std::size_t>> outcomes;
  for (std::size_t i = 0; i < test.size(); ++i) {
    out << test[i]->id << ',' << test[i]->emotion << ',' << set.emotions[ids[i].emotion];
    for (double s : ids[i].scores) out << ',' << eval::fmt(s, "%.10g");
    out << '\n';
    outcomes.emplace_back(ids[i].emotion, m.emotion_index(test[i]->emotion));
  }
  const auto cm = stage_a::confusion(set.emotions, outcomes);
  std::ofstream cout_csv(fs::path(o.report_dir) / "confusion.csv", std::ios::binary);
  stage_a::write_confusion_csv(cout_csv, cm);
  write_echo(o.report_dir, "identify",
             {{"manifest", o.manifest}, {"models_dir", o.models_dir}, {"alpha", num(set.alpha)},
              {"stage_a_mode", stage_a::to_string(set.mode)}, {"accuracy", eval::fmt(cm.accuracy())}});
  std::cout << "emotion identification accuracy " << eval::fmt(cm.accuracy(), "%.2f") << "%\n";
  return 0;
}

stage_b::TrialConfig trial_config(const Options &o) {
  stage_b::TrialConfig t;
  t.nontarget_claims = o.nontarget_claims;
  t.imposters_only = o.imposters_only;
  t.theta = o.theta;
  t.adapt_window = o.adapt_window;
  t.scoring.fused = o.fused_stage_b;
  t.scoring.alpha = o.alpha;
  t.seed = o.seed;
  t.workers = o.workers;
  return t;
}

int cmd_trials(const Options &o, const CLI::App &cmd) {
  const auto m = corpus::load_manifest(o.manifest);
  const auto store = load_split(m, o.features_dir, corpus::Split::test, o.workers);
  const auto mode = stage_b::parse_trial_mode(o.mode);
  const auto speakers = stage_b::load_model_set(speaker_dir(o));
  std::optional<stage_a::EmotionModelSet> emotions;
  if (mode == stage_b::TrialMode::two_stage || mode == stage_b::TrialMode::hmm_only) emotions = load_emotions(o, cmd);
  const auto recs = stage_b::run_trials(speakers, emotions ? &*emotions : nullptr, m, store, mode, trial_config(o));
  fs::create_directories(o.report_dir);
  std::ofstream out(fs::path(o.report_dir) / "trials.csv", std::ios::binary);
  stage_b::write_trials_csv(out, recs);
  std::size_t errors = 0;
  for (const auto &r : recs) errors += !r.error.empty();
  write_echo(o.report_dir, "trials",
             {{"manifest", o.manifest}, {"models_dir", o.models_dir}, {"mode", o.mode},
              {"alpha", num(emotions ? emotions->alpha : o.alpha)}, {"seed", std::to_string(o.seed)},
              {"theta", num(o.theta)}, {"adapt_window", std::to_string(o.adapt_window)},
              {"nontarget_claims", std::to_string(o.nontarget_claims)},
              {"imposters_only", o.imposters_only ? "true" : "false"},
              {"stage_b_scoring", o.fused_stage_b ? "fused" : "acoustic"}, {"trials", std::to_string(recs.size())},
              {"errored_trials", std::to_string(errors)}});
  std::cout << recs.size() << " trials, " << errors << " errored\n";
  return 0;
}

eval::ExperimentKind experiment_for(const std::string &mode) {
  if (mode == "one_stage") return eval::ExperimentKind::one_stage;
  if (mode == "hmm_only") return eval::ExperimentKind::hmm_only_stage_a;
  if (mode == "worst_case") return eval::ExperimentKind::worst_case;
  return eval::ExperimentKind::two_stage;
}

int run_report(const Options &o, const CLI::App &cmd, eval::ExperimentKind kind, const std::string &command) {
  const auto m = corpus::load_manifest(o.manifest);
  const auto store = load_split(m, o.features_dir, corpus::Split::test, o.workers);
  auto emotions = load_emotions(o, cmd);
  emotions.mode = stage_a::Mode::sphmm;
  const auto speakers = stage_b::load_model_set(speaker_dir(o));
  eval::ExperimentConfig cfg;
  cfg.trials = trial_config(o);
  cfg.fused_stage_b = o.fused_stage_b;
  cfg.echo = {{"manifest", o.manifest}, {"models_dir", o.models_dir}};
  const auto report = eval::run_experiment(kind, {&m, &store, &emotions, &speakers}, cfg);
  eval::write_report(o.report_dir, report);
  write_echo(o.report_dir, command, report.config);
  for (const auto &md : report.modes)
    std::cout << "average EER " << md.mode << ": " << eval::fmt(md.average_eer, "%.2f") << "%\n";
  for (const auto &[a, e] : report.alpha_sweep)
    std::cout << "alpha " << eval::fmt(a, "%.1f") << ": " << eval::fmt(e, "%.2f") << "%\n";
  for (const auto &c : report.comparisons)
    std::cout << "t(" << c.first << ", " << c.second << ") = " << eval::fmt(c.test.t, "%.3f")
              << (c.test.significant ? " significant" : " not significant") << " at 1.645\n";
  return 0;
}

std::vector<double> read_values(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<double> v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream cells(line);
    std::string cell;
    while (cells >> cell) {
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(cell, &used);
      } catch (const std::exception &) {
        used = 0;
      }
      if (used != cell.size() || !std::isfinite(x))
        throw FormatError(path + ":" + std::to_string(line_no) + ": not a number '" + cell + "'");
      v.push_back(x);
    }
  }
  if (v.empty()) throw ValidationError(path + ": no values");
  return v;
}

int cmd_ttest(const Options &o) {
  const auto a = eval::stat_summary(read_values(o.ttest_files[0]));
  const auto b = eval::stat_summary(read_values(o.ttest_files[1]));
  const auto t = eval::t_statistic(a, b);
  std::ostringstream rep;
  rep << "first = " << o.ttest_files[0] << "\nsecond = " << o.ttest_files[1] << '\n'
      << "mean_first = " << eval::fmt(a.mean, "%.4f") << "\nsd_first = " << eval::fmt(a.sd, "%.4f") << '\n'
      << "mean_second = " << eval::fmt(b.mean, "%.4f") << "\nsd_second = " << eval::fmt(b.sd, "%.4f") << '\n'
      << "n = " << a.n << "\nt = " << eval::fmt(t.t, "%.3f") << '\n'
      << "larger = " << (t.first_larger ? "first" : "second") << '\n'
      << "significant = " << (t.significant ? "yes" : "no") << " (critical 1.645)\n";
  std::cout << rep.str();
  if (!o.report_dir.empty()) {
    fs::create_directories(o.report_dir);
    std::ofstream(fs::path(o.report_dir) / "ttest.txt", std::ios::binary) << rep.str();
    write_echo(o.report_dir, "ttest", {{"first", o.ttest_files[0]}, {"second", o.ttest_files[1]}});
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Emotion-conditioned speaker verification with suprasegmental HMMs", "emoverify"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Options o;

  const std::vector<std::string> modes{"two_stage", "one_stage", "hmm_only", "worst_case", "oracle"};
  std::vector<CLI::Option *> worker_flags;
  auto add_workers = [&](CLI::App *c) {
    worker_flags.push_back(
        c->add_option("--workers", o.workers, "Worker threads; falls back to EMOVERIFY_WORKERS")
            ->check(CLI::Range(1u, 256u)));
  };
  auto add_model_shape = [&](CLI::App *c) {
    c->add_option("--states", o.states, "Acoustic HMM states N")->check(CLI::Range(std::size_t{1}, std::size_t{64}));
    c->add_option("--mixtures", o.mixtures, "Gaussians per state M")->check(CLI::Range(std::size_t{1}, std::size_t{64}));
    c->add_option("--alpha", o.alpha, "Prosodic stream weight")->check(CLI::Range(0.0, 1.0));
    c->add_flag("--no-composite", o.no_composite, "Disable the composite prosodic term");
  };
  auto add_trial_flags = [&](CLI::App *c) {
    c->add_option("--mode", o.mode, "Trial mode")->check(CLI::IsMember(modes));
    c->add_option("--alpha", o.alpha, "Override the stage-a alpha")->check(CLI::Range(0.0, 1.0));
    c->add_option("--seed", o.seed, "Seed for claim pairing and wrong-emotion draws");
    c->add_option("--theta", o.theta, "Decision threshold");
    c->add_option("--adapt-window", o.adapt_window, "Adapt theta to the mean of the last K scores (0 = fixed)");
    c->add_option("--nontarget-claims", o.nontarget_claims, "Nontarget claims per test utterance");
    c->add_flag("--imposters-only", o.imposters_only, "Draw nontarget trials from imposter speakers only");
    c->add_flag("--fused-stage-b", o.fused_stage_b, "Use fused SPHMM scores in stage b");
  };

  auto *features = app.add_subcommand("features", "Extract observation streams from WAV files");
  features->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  features->add_option("--features-dir", o.features_dir)->required();
  add_workers(features);

  auto *synth = app.add_subcommand("synth", "Generate the synthetic benchmark corpus");
  synth->add_option("--manifest", o.manifest, "Manifest to write")->required();
  synth->add_option("--features-dir", o.features_dir)->required();
  synth->add_option("--seed", o.seed)->required();
  synth->add_option("--separability", o.separability, "Scale of between-cell differences")->check(CLI::NonNegativeNumber);
  add_workers(synth);

  CLI::App *train_cmds[2];
  train_cmds[0] = app.add_subcommand("train-emotions", "Train speaker-pooled emotion models");
  train_cmds[1] = app.add_subcommand("train-speakers", "Enroll per-(speaker, emotion) models");
  for (auto *c : train_cmds) {
    c->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
    c->add_option("--features-dir", o.features_dir)->required()->check(CLI::ExistingDirectory);
    c->add_option("--models-dir", o.models_dir)->required();
    c->add_option("--seed", o.seed)->required();
    add_model_shape(c);
    add_workers(c);
  }
  train_cmds[0]->add_option("--mode", o.mode, "hmm_only trains for acoustic-only identification")->check(CLI::IsMember(modes));

  auto *identify = app.add_subcommand("identify", "Identify the emotion of every test utterance");
  CLI::App *trials = app.add_subcommand("trials", "Run verification trials");
  CLI::App *evalc = app.add_subcommand("eval", "Run an experiment and write the report");
  CLI::App *sweep = app.add_subcommand("sweep-alpha", "Average EER for alpha = 0.0, 0.1, ..., 1.0");
  for (auto *c : {identify, trials, evalc, sweep}) {
    c->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
    c->add_option("--features-dir", o.features_dir)->required()->check(CLI::ExistingDirectory);
    c->add_option("--models-dir", o.models_dir)->required()->check(CLI::ExistingDirectory);
    c->add_option("--report-dir", o.report_dir)->required();
    add_workers(c);
  }
  identify->add_option("--alpha", o.alpha, "Override the stage-a alpha")->check(CLI::Range(0.0, 1.0));
  identify->add_option("--mode", o.mode, "hmm_only identifies from the acoustic stream")->check(CLI::IsMember(modes));
  for (auto *c : {trials, evalc, sweep}) add_trial_flags(c);

  auto *ttest = app.add_subcommand("ttest", "Equal-n t-test between two EER vectors");
  ttest->add_option("files", o.ttest_files, "Two files of EER values")->required()->expected(2)->check(CLI::ExistingFile);
  ttest->add_option("--report-dir", o.report_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "emoverify: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  const bool workers_given =
      std::any_of(worker_flags.begin(), worker_flags.end(), [](const CLI::Option *f) { return f->count() > 0; });
  if (const char *env = std::getenv("EMOVERIFY_WORKERS"); env && !workers_given) {
    const std::string text = env;
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(text, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (text.empty() || used != text.size() || v < 1 || v > 256) {
      std::cerr << "emoverify: EMOVERIFY_WORKERS must be an integer in [1, 256], got '" << text << "'\n";
      return 2;
    }
    o.workers = static_cast<unsigned>(v);
  }

  try {
    if (*features) return cmd_features(o);
    if (*synth) return cmd_synth(o);
    if (*train_cmds[0]) return cmd_train_emotions(o);
    if (*train_cmds[1]) return cmd_train_speakers(o);
    if (*identify) return cmd_identify(o, *identify);
    if (*trials) return cmd_trials(o, *trials);
    if (*evalc) return run_report(o, *evalc, experiment_for(o.mode), "eval");
    if (*sweep) return run_report(o, *sweep, eval::ExperimentKind::alpha_sweep, "sweep-alpha");
    if (*ttest) return cmd_ttest(o);
  } catch (const std::exception &e) {
    std::cerr << "emoverify: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
