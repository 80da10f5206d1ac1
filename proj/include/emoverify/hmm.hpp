// emoverify/hmm.hpp

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

// Left-to-right (Bakis) hidden Markov models with diagonal-covariance GMM
// emissions. State indices are 0-based in code; diagnostics print them
// 1-based. Every model starts in state 0 with probability one and may end in
// any state.

#pragma once

#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "emoverify/binary_io.hpp"
#include "emoverify/common.hpp"

namespace emoverify::hmm {

inline constexpr double kDefaultVarianceFloor = 1e-4;
inline constexpr double kWeightFloor = 1e-8;

/// log N(x; mean, diag(var)).
inline double log_gaussian_diag(std::span<const double> x, std::span<const double> mean,
                                std::span<const double> var) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  double acc = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mean[d];
    acc += kLog2Pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * acc;
}

/// Mixture of diagonal Gaussians. Row k of `means`/`variances` is component k.
struct GmmEmission {
  std::vector<double> weights;
  Matrix means;
  Matrix variances;

  std::size_t num_components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }

  /// out[k] = log w_k + log N(x; mu_k, var_k).
  void component_log_densities(std::span<const double> x, std::span<double> out) const {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      out[k] = weights[k] > 0.0
                   ? std::log(weights[k]) + log_gaussian_diag(x, means.row(k), variances.row(k))
                   : kNegInf;
    }
  }

  double log_density(std::span<const double> x) const {
    std::vector<double> parts(weights.size());
    component_log_densities(x, parts);
    return log_sum_exp(parts);
  }

  bool operator==(const GmmEmission &) const = default;
};

struct HmmModel {
  Matrix transitions;  // N x N, row-stochastic
  std::vector<GmmEmission> states;
  int max_skip = 1;  // allowed forward jump; 1 = self-loop + advance

  std::size_t num_states() const { return states.size(); }
  std::size_t num_mixtures() const { return states.empty() ? 0 : states.front().num_components(); }
  std::size_t dim() const { return states.empty() ? 0 : states.front().dim(); }

  bool operator==(const HmmModel &) const = default;
};

namespace detail {
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace detail

/// Every violated invariant, with 1-based indices. Empty means valid.
inline std::vector<std::string> validate(const HmmModel &model,
                                         double variance_floor = kDefaultVarianceFloor) {
  using detail::fmt_double;
  std::vector<std::string> errors;
  const std::size_t n = model.num_states();
  if (n == 0) {
    errors.push_back("model has no states");
    return errors;
  }
  if (model.transitions.rows() != n || model.transitions.cols() != n) {
    errors.push_back("transition matrix is not " + std::to_string(n) + "x" + std::to_string(n));
    return errors;
  }
  if (model.max_skip < 1) errors.push_back("max_skip must be >= 1");
  const std::size_t m = model.num_mixtures();
  const std::size_t dim = model.dim();
  if (m == 0) errors.push_back("no mixture components");
  if (dim == 0) errors.push_back("zero feature dimension");

  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = model.transitions(i, j);
      if (!std::isfinite(a) || a < 0.0) {
        errors.push_back("invalid transition (" + std::to_string(i + 1) + "→" +
                         std::to_string(j + 1) + ") = " + fmt_double(a));
        continue;
      }
      const bool legal = j >= i && j - i <= static_cast<std::size_t>(model.max_skip);
      if (a != 0.0 && !legal)
        errors.push_back("non-Bakis transition (" + std::to_string(i + 1) + "→" +
                         std::to_string(j + 1) + ")");
      row_sum += a;
    }
    if (std::abs(row_sum - 1.0) > 1e-9)
      errors.push_back("transition row " + std::to_string(i + 1) + " sums " + fmt_double(row_sum));
  }

  for (std::size_t s = 0; s < n; ++s) {
    const GmmEmission &g = model.states[s];
    const std::string where = "state " + std::to_string(s + 1);
    if (g.num_components() != m || g.means.rows() != m || g.variances.rows() != m) {
      errors.push_back(where + ": component count mismatch");
      continue;
    }
    if (g.means.cols() != dim || g.variances.cols() != dim) {
      errors.push_back(where + ": dimension mismatch");
      continue;
    }
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (!(g.weights[k] >= 0.0) || !std::isfinite(g.weights[k]))
        errors.push_back(where + ": negative or non-finite weight " + std::to_string(k + 1));
      weight_sum += g.weights[k];
      for (std::size_t d = 0; d < dim; ++d) {
        if (!std::isfinite(g.means(k, d)))
          errors.push_back(where + ": non-finite mean (component " + std::to_string(k + 1) + ")");
        const double v = g.variances(k, d);
        if (!std::isfinite(v) || v < variance_floor)
          errors.push_back(where + ": variance " + fmt_double(v) + " below floor (component " +
                           std::to_string(k + 1) + ", dim " + std::to_string(d + 1) + ")");
      }
    }
    if (std::abs(weight_sum - 1.0) > 1e-9)
      errors.push_back(where + ": weights sum " + fmt_double(weight_sum));
  }
  return errors;
}

inline void require_valid(const HmmModel &model, double variance_floor = kDefaultVarianceFloor) {
  const auto errors = validate(model, variance_floor);
  if (errors.empty()) return;
  std::string msg = "invalid HMM:";
  for (const auto &e : errors) msg += " " + e + ";";
  throw ValidationError(msg);
}

namespace detail {

inline void check_observations(const HmmModel &model, const Matrix &obs) {
  if (obs.rows() == 0) throw ValidationError("empty observation sequence");
  if (obs.cols() != model.dim())
    throw ValidationError("observation dim " + std::to_string(obs.cols()) +
                          " does not match model dim " + std::to_string(model.dim()));
}

/// T x N matrix of per-state emission log-likelihoods.
inline Matrix emission_table(const HmmModel &model, const Matrix &obs) {
  const std::size_t n = model.num_states();
  Matrix table(obs.rows(), n);
  std::vector<double> parts(model.num_mixtures());
  for (std::size_t t = 0; t < obs.rows(); ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      model.states[j].component_log_densities(obs.row(t), parts);
      table(t, j) = log_sum_exp(parts);
    }
  }
  return table;
}

inline Matrix log_transitions(const HmmModel &model) {
  const std::size_t n = model.num_states();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = safe_log(model.transitions(i, j));
  return out;
}

inline std::size_t first_predecessor(const HmmModel &model, std::size_t j) {
  const auto skip = static_cast<std::size_t>(model.max_skip);
  return j >= skip ? j - skip : 0;
}

/// Log-domain forward lattice alpha(t, j).
inline Matrix forward_lattice(const HmmModel &model, const Matrix &log_a, const Matrix &emis) {
  const std::size_t n = model.num_states(), len = emis.rows();
  Matrix alpha(len, n, kNegInf);
  alpha(0, 0) = emis(0, 0);
  for (std::size_t t = 1; t < len; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = kNegInf;
      for (std::size_t i = first_predecessor(model, j); i <= j; ++i)
        acc = log_add(acc, alpha(t - 1, i) + log_a(i, j));
      alpha(t, j) = acc == kNegInf ? kNegInf : acc + emis(t, j);
    }
  }
  return alpha;
}

inline Matrix backward_lattice(const HmmModel &model, const Matrix &log_a, const Matrix &emis) {
  const std::size_t n = model.num_states(), len = emis.rows();
  const auto skip = static_cast<std::size_t>(model.max_skip);
  Matrix beta(len, n, kNegInf);
  for (std::size_t i = 0; i < n; ++i) beta(len - 1, i) = 0.0;
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = kNegInf;
      for (std::size_t j = i; j < n && j - i <= skip; ++j)
        acc = log_add(acc, log_a(i, j) + emis(t + 1, j) + beta(t + 1, j));
      beta(t, i) = acc;
    }
  }
  return beta;
}

inline double lattice_total(const Matrix &alpha) {
  return log_sum_exp(alpha.row(alpha.rows() - 1));
}

}  // namespace detail

/// log P(O | model), summed over every legal state path.
inline double log_forward(const HmmModel &model, const Matrix &obs) {
  detail::check_observations(model, obs);
  const Matrix emis = detail::emission_table(model, obs);
  const Matrix alpha = detail::forward_lattice(model, detail::log_transitions(model), emis);
  return detail::lattice_total(alpha);
}

/// Per-frame average log-likelihood, log P(O | model) / T.
inline double avg_frame_ll(const HmmModel &model, const Matrix &obs) {
  return log_forward(model, obs) / static_cast<double>(obs.rows());
}

struct ViterbiResult {
  std::vector<std::size_t> path;
  double log_prob = kNegInf;
};

/// Best state path. Among equally scored paths the lexicographically smallest
/// state sequence wins: scores-to-go are computed backwards, then the path is
/// traced forwards taking the lowest state that attains the optimum.
inline ViterbiResult viterbi(const HmmModel &model, const Matrix &obs) {
  detail::check_observations(model, obs);
  const std::size_t n = model.num_states(), len = obs.rows();
  const auto skip = static_cast<std::size_t>(model.max_skip);
  const Matrix emis = detail::emission_table(model, obs);
  const Matrix log_a = detail::log_transitions(model);

  Matrix to_go(len, n, kNegInf);
  for (std::size_t i = 0; i < n; ++i) to_go(len - 1, i) = 0.0;
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = kNegInf;
      for (std::size_t j = i; j < n && j - i <= skip; ++j)
        best = std::max(best, log_a(i, j) + emis(t + 1, j) + to_go(t + 1, j));
      to_go(t, i) = best;
    }
  }

  ViterbiResult result;
  result.path.assign(len, 0);
  result.log_prob = emis(0, 0) + to_go(0, 0);
  for (std::size_t t = 0; t + 1 < len; ++t) {
    const std::size_t i = result.path[t];
    for (std::size_t j = i; j < n && j - i <= skip; ++j) {
      if (log_a(i, j) + emis(t + 1, j) + to_go(t + 1, j) == to_go(t, i)) {
        result.path[t + 1] = j;
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int max_iterations = 20;
  double convergence_delta = 1e-4;  // per utterance, on total log-likelihood
  double variance_floor = kDefaultVarianceFloor;
  int kmeans_iterations = 10;
  std::uint64_t seed = 0;
  int max_skip = 1;
};

struct TrainResult {
  HmmModel model;
  std::vector<double> log_likelihoods;  // total log-likelihood before each update
};

namespace detail {

inline bool matrix_less(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  return std::lexicographical_compare(a.data().begin(), a.data().end(), b.data().begin(),
                                      b.data().end());
}

/// Permutation that visits utterances in a content-defined order, so that
/// accumulated statistics do not depend on how the caller ordered them.
inline std::vector<std::size_t> canonical_order(std::span<const Matrix> utterances) {
  std::vector<std::size_t> order(utterances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return matrix_less(utterances[a], utterances[b]);
  });
  return order;
}

inline void check_training_set(std::span<const Matrix> utterances, std::size_t dim) {
  if (utterances.empty()) throw ValidationError("empty training set");
  for (std::size_t u = 0; u < utterances.size(); ++u) {
    if (utterances[u].rows() == 0)
      throw ValidationError("training utterance " + std::to_string(u) + " is empty");
    if (utterances[u].cols() != dim)
      throw ValidationError("training utterance " + std::to_string(u) + " has dim " +
                            std::to_string(utterances[u].cols()) + ", expected " +
                            std::to_string(dim));
  }
}

/// Maximizes sum_k occ_k log w_k subject to w_k >= floor and sum w_k = 1.
inline std::vector<double> floored_weights(std::span<const double> occupancy, double floor) {
  const std::size_t m = occupancy.size();
  std::vector<bool> pinned(m, false);
  std::vector<double> w(m, 0.0);
  for (;;) {
    double free_occ = 0.0;
    std::size_t n_pinned = 0;
    for (std::size_t k = 0; k < m; ++k) {
      if (pinned[k]) ++n_pinned;
      else free_occ += occupancy[k];
    }
    const double free_mass = 1.0 - static_cast<double>(n_pinned) * floor;
    bool changed = false;
    for (std::size_t k = 0; k < m; ++k) {
      if (pinned[k]) {
        w[k] = floor;
        continue;
      }
      w[k] = free_occ > 0.0 ? occupancy[k] / free_occ * free_mass
                            : free_mass / static_cast<double>(m - n_pinned);
      if (w[k] < floor) {
        pinned[k] = true;
        changed = true;
      }
    }
    if (!changed) return w;
  }
}

struct Accumulators {
  Matrix transitions;                // N x N expected transition counts
  std::vector<std::vector<double>> occupancy;  // [state][component]
  std::vector<Matrix> sum_x;         // [state] M x D, centred on the current mean
  std::vector<Matrix> sum_x2;        // [state] M x D, centred on the current mean

  Accumulators(std::size_t n, std::size_t m, std::size_t dim)
      : transitions(n, n), occupancy(n, std::vector<double>(m, 0.0)),
        sum_x(n, Matrix(m, dim)), sum_x2(n, Matrix(m, dim)) {}
};

/// E-step for one utterance; returns its log-likelihood.
inline double accumulate(const HmmModel &model, const Matrix &log_a, const Matrix &obs,
                         Accumulators &acc) {
  const std::size_t n = model.num_states(), m = model.num_mixtures(), dim = model.dim();
  const std::size_t len = obs.rows();
  const auto skip = static_cast<std::size_t>(model.max_skip);

  const Matrix emis = emission_table(model, obs);
  const Matrix alpha = forward_lattice(model, log_a, emis);
  const Matrix beta = backward_lattice(model, log_a, emis);
  const double total = lattice_total(alpha);

  std::vector<double> parts(m);
  for (std::size_t t = 0; t < len; ++t) {
    const auto x = obs.row(t);
    for (std::size_t j = 0; j < n; ++j) {
      const double log_gamma = alpha(t, j) + beta(t, j) - total;
      if (log_gamma == kNegInf) continue;
      const double gamma = std::exp(log_gamma);
      if (gamma == 0.0) continue;
      const GmmEmission &g = model.states[j];
      g.component_log_densities(x, parts);
      for (std::size_t k = 0; k < m; ++k) {
        if (parts[k] == kNegInf) continue;
        const double post = gamma * std::exp(parts[k] - emis(t, j));
        if (post == 0.0) continue;
        acc.occupancy[j][k] += post;
        auto sx = acc.sum_x[j].row(k);
        auto sx2 = acc.sum_x2[j].row(k);
        for (std::size_t d = 0; d < dim; ++d) {
          const double c = x[d] - g.means(k, d);
          sx[d] += post * c;
          sx2[d] += post * c * c;
        }
      }
    }
    if (t + 1 == len) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha(t, i) == kNegInf) continue;
      for (std::size_t j = i; j < n && j - i <= skip; ++j) {
        const double log_xi = alpha(t, i) + log_a(i, j) + emis(t + 1, j) + beta(t + 1, j) - total;
        if (log_xi != kNegInf) acc.transitions(i, j) += std::exp(log_xi);
      }
    }
  }
  return total;
}

inline HmmModel maximize(const HmmModel &model, const Accumulators &acc, double variance_floor) {
  const std::size_t n = model.num_states(), m = model.num_mixtures(), dim = model.dim();
  HmmModel next = model;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += acc.transitions(i, j);
    if (row <= 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) next.transitions(i, j) = acc.transitions(i, j) / row;
  }
  for (std::size_t s = 0; s < n; ++s) {
    GmmEmission &g = next.states[s];
    const auto &occ = acc.occupancy[s];
    double state_occ = 0.0;
    for (double o : occ) state_occ += o;
    if (state_occ <= 0.0) continue;
    g.weights = floored_weights(occ, kWeightFloor);
    for (std::size_t k = 0; k < m; ++k) {
      if (occ[k] <= 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        const double shift = acc.sum_x[s](k, d) / occ[k];
        const double var = acc.sum_x2[s](k, d) / occ[k] - shift * shift;
        g.means(k, d) = model.states[s].means(k, d) + shift;
        g.variances(k, d) = std::max(var, variance_floor);
      }
    }
  }
  return next;
}

}  // namespace detail

/// Baum-Welch re-estimation of every parameter. Bakis zeros are preserved
/// because transitions that start at zero never accumulate counts.
inline TrainResult train_baum_welch(const HmmModel &init, std::span<const Matrix> utterances,
                                    const TrainConfig &cfg) {
  require_valid(init, cfg.variance_floor);
  detail::check_training_set(utterances, init.dim());
  const auto order = detail::canonical_order(utterances);
  const double threshold = cfg.convergence_delta * static_cast<double>(utterances.size());

  TrainResult result{init, {}};
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const HmmModel &model = result.model;
    detail::Accumulators acc(model.num_states(), model.num_mixtures(), model.dim());
    const Matrix log_a = detail::log_transitions(model);
    double total = 0.0;
    for (std::size_t u : order) total += detail::accumulate(model, log_a, utterances[u], acc);
    if (!std::isfinite(total))
      throw ValidationError("training data has zero likelihood under the current model");
    const bool converged =
        !result.log_likelihoods.empty() && total - result.log_likelihoods.back() < threshold;
    result.log_likelihoods.push_back(total);
    if (converged) break;
    result.model = detail::maximize(model, acc, cfg.variance_floor);
  }
  return result;
}

namespace detail {

/// Seeded k-means++ / Lloyd clustering into at most `k` groups.
inline std::vector<std::size_t> kmeans(const std::vector<std::span<const double>> &points,
                                       std::size_t k, int iterations, Rng &rng,
                                       Matrix &centers) {
  const std::size_t count = points.size(), dim = points.front().size();
  auto dist2 = [&](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };
  centers = Matrix(k, dim);
  {
    const auto first = points[rng.index(count)];
    std::copy(first.begin(), first.end(), centers.row(0).begin());
    std::vector<double> nearest(count, kPosInf);
    for (std::size_t c = 1; c < k; ++c) {
      for (std::size_t p = 0; p < count; ++p)
        nearest[p] = std::min(nearest[p], dist2(points[p], centers.row(c - 1)));
      const auto pick = points[rng.categorical(nearest)];
      std::copy(pick.begin(), pick.end(), centers.row(c).begin());
    }
  }
  std::vector<std::size_t> label(count, 0);
  for (int iter = 0; iter <= iterations; ++iter) {
    for (std::size_t p = 0; p < count; ++p) {
      double best = kPosInf;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = dist2(points[p], centers.row(c));
        if (d < best) {
          best = d;
          label[p] = c;
        }
      }
    }
    if (iter == iterations) break;
    Matrix sums(k, dim);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t p = 0; p < count; ++p) {
      ++sizes[label[p]];
      auto row = sums.row(label[p]);
      for (std::size_t d = 0; d < dim; ++d) row[d] += points[p][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t d = 0; d < dim; ++d)
        centers(c, d) = sums(c, d) / static_cast<double>(sizes[c]);
    }
  }
  return label;
}

inline GmmEmission fit_gmm(const std::vector<std::span<const double>> &points, std::size_t m,
                           const TrainConfig &cfg, Rng &rng) {
  const std::size_t count = points.size(), dim = points.front().size();
  std::vector<double> global_mean(dim, 0.0), global_var(dim, 0.0);
  for (const auto &p : points)
    for (std::size_t d = 0; d < dim; ++d) global_mean[d] += p[d];
  for (double &v : global_mean) v /= static_cast<double>(count);
  for (const auto &p : points)
    for (std::size_t d = 0; d < dim; ++d)
      global_var[d] += (p[d] - global_mean[d]) * (p[d] - global_mean[d]);
  for (double &v : global_var) v = std::max(v / static_cast<double>(count), cfg.variance_floor);

  Matrix centers;
  const auto label = kmeans(points, m, cfg.kmeans_iterations, rng, centers);

  GmmEmission g;
  g.means = centers;
  g.variances = Matrix(m, dim);
  std::vector<double> occ(m, 0.0);
  for (std::size_t p = 0; p < count; ++p) {
    occ[label[p]] += 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = points[p][d] - centers(label[p], d);
      g.variances(label[p], d) += diff * diff;
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t d = 0; d < dim; ++d) {
      g.variances(c, d) = occ[c] >= 2.0
                              ? std::max(g.variances(c, d) / occ[c], cfg.variance_floor)
                              : global_var[d];
    }
  }
  g.weights = floored_weights(occ, kWeightFloor);
  return g;
}

}  // namespace detail

/// Initial model: each utterance is cut into N equal temporal segments, and
/// segment i of every utterance feeds a seeded k-means GMM for state i. When
/// some state has fewer than M frames, M is lowered for the whole model (the
/// returned model's num_mixtures() records the value actually used).
inline HmmModel init_model(std::span<const Matrix> utterances, std::size_t num_states,
                           std::size_t num_mixtures, std::size_t dim, const TrainConfig &cfg) {
  if (num_states == 0 || num_mixtures == 0) throw ValidationError("N and M must be positive");
  if (cfg.max_skip < 1) throw ValidationError("max_skip must be >= 1");
  detail::check_training_set(utterances, dim);
  const auto order = detail::canonical_order(utterances);

  std::vector<std::vector<std::span<const double>>> segments(num_states);
  std::vector<std::span<const double>> all_frames;
  for (std::size_t u : order) {
    const Matrix &utt = utterances[u];
    for (std::size_t t = 0; t < utt.rows(); ++t) {
      const std::size_t s = std::min(num_states - 1, t * num_states / utt.rows());
      segments[s].push_back(utt.row(t));
      all_frames.push_back(utt.row(t));
    }
  }
  for (auto &seg : segments)
    if (seg.empty()) seg = all_frames;

  std::size_t m = num_mixtures;
  for (const auto &seg : segments) m = std::min(m, seg.size());

  Rng rng(cfg.seed);
  HmmModel model;
  model.max_skip = cfg.max_skip;
  model.transitions = Matrix(num_states, num_states);
  for (std::size_t i = 0; i < num_states; ++i) {
    const std::size_t reach = std::min(num_states - 1, i + static_cast<std::size_t>(cfg.max_skip));
    const double p = 1.0 / static_cast<double>(reach - i + 1);
    for (std::size_t j = i; j <= reach; ++j) model.transitions(i, j) = p;
  }
  for (const auto &seg : segments) model.states.push_back(detail::fit_gmm(seg, m, cfg, rng));
  return model;
}

struct SampledSequence {
  Matrix frames;
  std::vector<std::size_t> states;
};

/// Draws a state path from the transitions and one Gaussian per frame.
inline SampledSequence sample_with_states(const HmmModel &model, std::size_t length,
                                          std::uint64_t seed) {
  if (length == 0) throw ValidationError("sample length must be >= 1");
  Rng rng(seed);
  SampledSequence out{Matrix(length, model.dim()), std::vector<std::size_t>(length)};
  std::size_t state = 0;
  for (std::size_t t = 0; t < length; ++t) {
    out.states[t] = state;
    const GmmEmission &g = model.states[state];
    const std::size_t k = rng.categorical(g.weights);
    auto row = out.frames.row(t);
    for (std::size_t d = 0; d < row.size(); ++d)
      row[d] = g.means(k, d) + std::sqrt(g.variances(k, d)) * rng.normal();
    state = rng.categorical(model.transitions.row(state));
  }
  return out;
}

inline Matrix sample_sequence(const HmmModel &model, std::size_t length, std::uint64_t seed) {
  return sample_with_states(model, length, seed).frames;
}

// ---------------------------------------------------------------------------
// Serialization: "EVHM", version, N, M, D (u32), then transitions (N*N),
// weights (N*M), means (N*M*D), variances (N*M*D) as little-endian f64, each
// block in state-major, component-major, dimension-minor order.

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline void write_model(io::BinaryWriter &w, const HmmModel &model) {
  const std::size_t n = model.num_states(), m = model.num_mixtures(), dim = model.dim();
  w.magic("EVHM");
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(dim));
  w.f64s(model.transitions.data());
  for (const auto &g : model.states) w.f64s(g.weights);
  for (const auto &g : model.states) w.f64s(g.means.data());
  for (const auto &g : model.states) w.f64s(g.variances.data());
}

inline HmmModel read_model(io::BinaryReader &r) {
  r.expect_magic("EVHM");
  if (const auto v = r.u32(); v != kModelFormatVersion)
    throw FormatError("unsupported HMM format version " + std::to_string(v));
  const std::size_t n = r.u32(), m = r.u32(), dim = r.u32();
  if (n == 0 || m == 0 || dim == 0 || n > 4096 || m > 4096 || dim > 4096)
    throw FormatError("implausible HMM header");
  HmmModel model;
  model.transitions = Matrix(n, n);
  r.f64s(model.transitions.data());
  model.states.resize(n);
  for (auto &g : model.states) {
    g.weights.resize(m);
    r.f64s(g.weights);
  }
  for (auto &g : model.states) {
    g.means = Matrix(m, dim);
    r.f64s(g.means.data());
  }
  for (auto &g : model.states) {
    g.variances = Matrix(m, dim);
    r.f64s(g.variances.data());
  }
  int skip = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (model.transitions(i, j) != 0.0) skip = std::max(skip, static_cast<int>(j - i));
  model.max_skip = skip;
  return model;
}

inline void save_model(const std::string &path, const HmmModel &model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  io::BinaryWriter w(out);
  write_model(w, model);
}

inline HmmModel load_model(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  io::BinaryReader r(in, path);
  HmmModel model = read_model(r);
  r.expect_end();
  return model;
}

}  // namespace emoverify::hmm
