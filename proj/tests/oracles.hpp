// tests/oracles.hpp

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

// Independent reference computations used only by the test suites. Nothing
// here calls into the library's scoring or metric code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "emoverify/hmm.hpp"

namespace emoverify::oracle {

/// log N(x; mu, diag(var)) evaluated in long double.
inline long double gaussian_log_density(const std::vector<double> &x, std::span<const double> mu,
                                        std::span<const double> var) {
  long double acc = 0.0L;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const long double diff = static_cast<long double>(x[d]) - mu[d];
    acc += std::log(2.0L * 3.14159265358979323846264338327950288L * var[d]) + diff * diff / var[d];
  }
  return -0.5L * acc;
}

/// log sum_k w_k N(x; ...), by direct summation after a max shift.
inline long double mixture_log_density(const hmm::GmmEmission &g, const std::vector<double> &x) {
  std::vector<long double> parts;
  for (std::size_t k = 0; k < g.weights.size(); ++k) {
    if (g.weights[k] <= 0.0) continue;
    parts.push_back(std::log(static_cast<long double>(g.weights[k])) +
                    gaussian_log_density(x, g.means.row(k), g.variances.row(k)));
  }
  const long double top = *std::max_element(parts.begin(), parts.end());
  long double s = 0.0L;
  for (long double p : parts) s += std::exp(p - top);
  return top + std::log(s);
}

struct PathScore {
  std::vector<std::size_t> path;
  long double log_prob;
};

/// Every state path with nonzero probability, in lexicographic order.
inline std::vector<PathScore> enumerate_paths(const hmm::HmmModel &model, const Matrix &obs) {
  const std::size_t n = model.num_states(), len = obs.rows();
  std::vector<std::vector<long double>> emis(len, std::vector<long double>(n));
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> x(obs.row(t).begin(), obs.row(t).end());
    for (std::size_t j = 0; j < n; ++j) emis[t][j] = mixture_log_density(model.states[j], x);
  }
  std::vector<PathScore> out;
  std::vector<std::size_t> path(len, 0);
  // Odometer over all N^T sequences; prune those starting outside state 0.
  for (;;) {
    if (path[0] == 0) {
      long double lp = emis[0][0];
      bool ok = true;
      for (std::size_t t = 1; t < len && ok; ++t) {
        const double a = model.transitions(path[t - 1], path[t]);
        if (a <= 0.0) ok = false;
        else lp += std::log(static_cast<long double>(a)) + emis[t][path[t]];
      }
      if (ok) out.push_back({path, lp});
    }
    std::size_t pos = len;
    while (pos-- > 0) {
      if (++path[pos] < n) break;
      path[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

inline long double brute_force_log_forward(const hmm::HmmModel &model, const Matrix &obs) {
  const auto paths = enumerate_paths(model, obs);
  long double top = -std::numeric_limits<long double>::infinity();
  for (const auto &p : paths) top = std::max(top, p.log_prob);
  long double s = 0.0L;
  for (const auto &p : paths) s += std::exp(p.log_prob - top);
  return top + std::log(s);
}

/// Highest scoring path; ties resolved to the lexicographically smallest.
inline PathScore brute_force_viterbi(const hmm::HmmModel &model, const Matrix &obs) {
  const auto paths = enumerate_paths(model, obs);
  PathScore best = paths.front();
  for (const auto &p : paths)
    if (p.log_prob > best.log_prob) best = p;
  return best;
}

/// Random valid Bakis model with N states, M components, dimension D.
inline hmm::HmmModel random_model(std::mt19937_64 &gen, std::size_t n, std::size_t m,
                                  std::size_t dim) {
  std::uniform_real_distribution<double> u(0.05, 1.0), mu(-2.0, 2.0), var(0.2, 2.0);
  hmm::HmmModel model;
  model.transitions = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 == n) {
      model.transitions(i, i) = 1.0;
      continue;
    }
    const double stay = u(gen);
    model.transitions(i, i) = stay;
    model.transitions(i, i + 1) = 1.0 - stay;
  }
  for (std::size_t s = 0; s < n; ++s) {
    hmm::GmmEmission g;
    g.means = Matrix(m, dim);
    g.variances = Matrix(m, dim);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      g.weights.push_back(u(gen));
      total += g.weights.back();
      for (std::size_t d = 0; d < dim; ++d) {
        g.means(k, d) = mu(gen);
        g.variances(k, d) = var(gen);
      }
    }
    for (double &w : g.weights) w /= total;
    model.states.push_back(std::move(g));
  }
  return model;
}

inline Matrix random_observations(std::mt19937_64 &gen, std::size_t len, std::size_t dim,
                                  double offset = 0.0) {
  std::normal_distribution<double> nd(0.0, 1.5);
  Matrix obs(len, dim);
  for (auto &v : obs.data()) v = nd(gen) + offset;
  return obs;
}

// ---------------------------------------------------------------------------
// Detection-error oracle: try every candidate threshold, O(n^2).

struct SweepPoint {
  double theta, far, frr;
};

inline std::vector<SweepPoint> brute_force_sweep(const std::vector<double> &targets,
                                                 const std::vector<double> &nontargets) {
  std::set<double> thresholds(targets.begin(), targets.end());
  thresholds.insert(nontargets.begin(), nontargets.end());
  thresholds.insert(-std::numeric_limits<double>::infinity());
  thresholds.insert(std::numeric_limits<double>::infinity());
  std::vector<SweepPoint> out;
  for (double th : thresholds) {
    std::size_t fa = 0, fr = 0;
    for (double s : nontargets)
      if (s >= th) ++fa;
    for (double s : targets)
      if (s < th) ++fr;
    out.push_back({th, static_cast<double>(fa) / static_cast<double>(nontargets.size()),
                   static_cast<double>(fr) / static_cast<double>(targets.size())});
  }
  return out;
}

/// (EER percent, threshold) at the |FAR - FRR| minimizer, smallest threshold on ties.
inline std::pair<double, double> brute_force_eer(const std::vector<double> &targets,
                                                 const std::vector<double> &nontargets) {
  const auto sweep = brute_force_sweep(targets, nontargets);
  const SweepPoint *best = nullptr;
  for (const auto &p : sweep)
    if (!best || std::abs(p.far - p.frr) < std::abs(best->far - best->frr)) best = &p;
  return {100.0 * (best->far + best->frr) / 2.0, best->theta};
}

}  // namespace emoverify::oracle
