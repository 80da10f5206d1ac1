// emoverify/common.hpp

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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace emoverify {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (manifest, WAV, binary stream).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Dense row-major matrix of doubles. Rows are frames, columns are features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ValidationError("matrix data size does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<double> &data() const { return data_; }
  std::vector<double> &data() { return data_; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw ValidationError("row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  bool operator==(const Matrix &) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> values) {
  double max_v = kNegInf;
  for (double v : values) max_v = std::max(max_v, v);
  if (max_v == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max_v);
  return max_v + std::log(sum);
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

inline double mean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean of empty sequence");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// ---------------------------------------------------------------------------
// Portable deterministic random numbers. The standard distributions are
// implementation-defined, so sampling goes through these helpers instead.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed derived from a master seed and a stable key (e.g. an utterance id).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  return splitmix64(master ^ splitmix64(fnv1a64(key)));
}

/// xoshiro256** seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    for (auto &s : state_) {
      seed = splitmix64(seed);
      s = seed;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Index drawn from an unnormalized discrete distribution.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (r < weights[i]) return i;
      r -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return 0;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled by exactly one call, so writing results into slot i keeps the
/// output independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn &&fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(count);
  threads.reserve(count);
  for (unsigned w = 0; w < count; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += count) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : threads) t.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace emoverify
