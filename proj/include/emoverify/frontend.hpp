// emoverify/frontend.hpp

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

// Audio front-end: 16-bit PCM WAV input, pre-emphasis and framing, MFCCs,
// and block-level prosodic statistics (pitch, energy, duration).

#pragma once

#include <complex>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "emoverify/common.hpp"

namespace emoverify::frontend {

struct AudioClip {
  std::vector<double> samples;  // scaled to [-1, 1)
  int sample_rate = 16000;
};

struct FrontendConfig {
  double pre_emphasis = 0.97;
  double frame_ms = 16.0;
  double overlap_ms = 9.0;
  int mel_filters = 24;
  int num_ceps = 13;  // includes c0
  double log_floor = 1e-10;
  int block_size = 10;  // acoustic frames per prosodic block
  double pitch_min_hz = 60.0;
  double pitch_max_hz = 400.0;
  double voicing_threshold = 0.3;

  void validate() const {
    if (!(pre_emphasis >= 0.0 && pre_emphasis < 1.0))
      throw ValidationError("pre-emphasis must be in [0, 1)");
    if (!(frame_ms > 0.0) || !(overlap_ms >= 0.0) || overlap_ms >= frame_ms)
      throw ValidationError("frame overlap must be shorter than the frame");
    if (num_ceps < 1 || mel_filters < 1 || num_ceps > mel_filters)
      throw ValidationError("cepstral count must be in [1, mel filter count]");
    if (block_size < 1) throw ValidationError("prosodic block size must be >= 1");
    if (!(log_floor > 0.0)) throw ValidationError("log floor must be positive");
    if (!(pitch_min_hz > 0.0 && pitch_min_hz < pitch_max_hz))
      throw ValidationError("invalid pitch search range");
  }
};

/// Per-utterance observation streams.
struct ObservationPair {
  Matrix acoustic;                    // T x D cepstra
  Matrix prosodic;                    // T_p x D_p block statistics
  std::vector<std::uint8_t> voiced;   // per prosodic block
  std::string source;                 // utterance id

  bool operator==(const ObservationPair &) const = default;
};

inline constexpr std::size_t kProsodicDim = 7;
inline constexpr std::size_t kVoicedFractionColumn = 5;

inline std::size_t num_blocks(std::size_t frames, int block_size) {
  return (frames + static_cast<std::size_t>(block_size) - 1) / static_cast<std::size_t>(block_size);
}

/// Majority-voiced blocks, read from the voiced-fraction column.
inline std::vector<std::uint8_t> voicing_flags(const Matrix &prosodic) {
  std::vector<std::uint8_t> flags(prosodic.rows(), 1);
  if (prosodic.cols() != kProsodicDim) return flags;
  for (std::size_t b = 0; b < prosodic.rows(); ++b)
    flags[b] = prosodic(b, kVoicedFractionColumn) >= 0.5 ? 1 : 0;
  return flags;
}

/// Shape and finiteness checks; block_size 0 skips the T_p law.
inline void check_observation(const ObservationPair &obs, int block_size = 0) {
  if (obs.acoustic.rows() == 0) throw ValidationError(obs.source + ": empty acoustic stream");
  if (obs.prosodic.rows() == 0) throw ValidationError(obs.source + ": empty prosodic stream");
  if (block_size > 0 && obs.prosodic.rows() != num_blocks(obs.acoustic.rows(), block_size))
    throw ValidationError(obs.source + ": prosodic frame count is not ceil(T/K)");
  for (const Matrix *m : {&obs.acoustic, &obs.prosodic})
    for (double v : m->data())
      if (!std::isfinite(v)) throw ValidationError(obs.source + ": non-finite feature value");
}

// ---------------------------------------------------------------------------
// WAV

namespace detail {

inline std::uint32_t le32(const unsigned char *p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline AudioClip parse_wav(const std::vector<unsigned char> &bytes, const std::string &name) {
  using detail::le16;
  using detail::le32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(name + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  int rate = 0;
  const unsigned char *data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char *chunk = bytes.data() + pos;
    const std::size_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      if (std::memcmp(chunk, "data", 4) != 0) throw FormatError(name + ": truncated chunk");
    }
    const std::size_t avail = std::min(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw FormatError(name + ": short fmt chunk");
      const unsigned char *f = bytes.data() + body;
      const int format = le16(f), channels = le16(f + 2), bits = le16(f + 14);
      rate = static_cast<int>(le32(f + 4));
      if (format != 1) throw FormatError(name + ": audio_format=" + std::to_string(format) + " unsupported (PCM only)");
      if (channels != 1) throw FormatError(name + ": channels=" + std::to_string(channels) + " unsupported");
      if (bits != 16) throw FormatError(name + ": bits_per_sample=" + std::to_string(bits) + " unsupported");
      if (rate <= 0) throw FormatError(name + ": sample_rate=" + std::to_string(rate) + " unsupported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw FormatError(name + ": missing fmt chunk");
  if (!data) throw FormatError(name + ": missing data chunk");

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(le16(data + 2 * i));
    clip.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return clip;
}

inline AudioClip load_wav(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return parse_wav(bytes, path);
}

/// Writes mono 16-bit PCM; samples are clipped to the representable range.
inline void save_wav(const std::string &path, const AudioClip &clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char *>(b), 2);
  };
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(clip.sample_rate));
  put32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
}

// ---------------------------------------------------------------------------
// Framing

struct FrameGeometry {
  std::size_t length;
  std::size_t hop;
};

inline FrameGeometry frame_geometry(int sample_rate, const FrontendConfig &cfg) {
  const auto length = static_cast<std::size_t>(std::lround(cfg.frame_ms * sample_rate / 1000.0));
  const auto overlap = static_cast<std::size_t>(std::lround(cfg.overlap_ms * sample_rate / 1000.0));
  if (length == 0 || overlap >= length) throw ValidationError("degenerate frame geometry");
  return {length, length - overlap};
}

struct Frames {
  Matrix samples;  // one pre-emphasized frame per row
  int sample_rate = 16000;
};

/// Pre-emphasis over the whole signal, then framing; a trailing partial
/// frame is dropped.
inline Frames frame_signal(const AudioClip &clip, const FrontendConfig &cfg) {
  cfg.validate();
  if (clip.sample_rate <= 0) throw ValidationError("sample rate must be positive");
  const FrameGeometry geo = frame_geometry(clip.sample_rate, cfg);
  const std::size_t len = clip.samples.size();
  if (len < geo.length)
    throw ValidationError("clip has " + std::to_string(len) + " samples, shorter than one frame (" +
                          std::to_string(geo.length) + ")");
  std::vector<double> emphasized(len);
  emphasized[0] = clip.samples[0];
  for (std::size_t n = 1; n < len; ++n)
    emphasized[n] = clip.samples[n] - cfg.pre_emphasis * clip.samples[n - 1];

  const std::size_t count = (len - geo.length) / geo.hop + 1;
  Frames out{Matrix(count, geo.length), clip.sample_rate};
  for (std::size_t f = 0; f < count; ++f)
    std::copy_n(emphasized.begin() + static_cast<std::ptrdiff_t>(f * geo.hop), geo.length,
                out.samples.row(f).begin());
  return out;
}

// ---------------------------------------------------------------------------
// MFCC

namespace detail {

inline void fft_in_place(std::vector<std::complex<double>> &a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

/// Triangular filters equally spaced on the mel scale between 0 Hz and
/// Nyquist, evaluated at the FFT bin frequencies. Row i is filter i.
inline Matrix mel_filterbank(int num_filters, std::size_t fft_size, int sample_rate) {
  const std::size_t bins = fft_size / 2 + 1;
  const double mel_hi = detail::hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(num_filters) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = detail::mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(num_filters + 1));
  Matrix bank(static_cast<std::size_t>(num_filters), bins);
  for (std::size_t f = 0; f < bank.rows(); ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      if (hz > lo && hz <= mid) bank(f, k) = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi) bank(f, k) = (hi - hz) / (hi - mid);
    }
  }
  return bank;
}

inline std::vector<double> mel_center_frequencies(int num_filters, int sample_rate) {
  const double mel_hi = detail::hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers;
  for (int i = 1; i <= num_filters; ++i)
    centers.push_back(detail::mel_to_hz(mel_hi * i / static_cast<double>(num_filters + 1)));
  return centers;
}

/// Magnitude spectrum of a Hamming-windowed frame, zero-padded to fft_size.
inline std::vector<double> magnitude_spectrum(std::span<const double> frame, std::size_t fft_size) {
  const std::size_t len = frame.size();
  std::vector<std::complex<double>> buf(fft_size);
  for (std::size_t n = 0; n < len; ++n) {
    const double w = len > 1 ? 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                      static_cast<double>(len - 1))
                             : 1.0;
    buf[n] = frame[n] * w;
  }
  detail::fft_in_place(buf);
  std::vector<double> mag(fft_size / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

/// Filterbank energies of every frame (before the log), one row per frame.
inline Matrix filterbank_energies(const Frames &frames, const FrontendConfig &cfg) {
  const std::size_t fft_size = detail::next_pow2(frames.samples.cols());
  const Matrix bank = mel_filterbank(cfg.mel_filters, fft_size, frames.sample_rate);
  Matrix out(frames.samples.rows(), bank.rows());
  for (std::size_t t = 0; t < frames.samples.rows(); ++t) {
    const auto mag = magnitude_spectrum(frames.samples.row(t), fft_size);
    for (std::size_t f = 0; f < bank.rows(); ++f) {
      double e = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) e += bank(f, k) * mag[k];
      out(t, f) = e;
    }
  }
  return out;
}

/// Orthonormal DCT-II of the log filterbank energies, first D coefficients.
/// Coefficients k >= 1 are computed on values offset by the first entry;
/// they are mathematically unaffected and a constant input gives exact zeros.
inline Matrix mfcc(const Frames &frames, const FrontendConfig &cfg) {
  cfg.validate();
  if (frames.samples.rows() == 0) throw ValidationError("no frames");
  const Matrix energies = filterbank_energies(frames, cfg);
  const std::size_t nf = energies.cols(), nc = static_cast<std::size_t>(cfg.num_ceps);
  Matrix basis(nc, nf);
  for (std::size_t k = 0; k < nc; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(nf));
    for (std::size_t n = 0; n < nf; ++n)
      basis(k, n) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                     (static_cast<double>(n) + 0.5) / static_cast<double>(nf));
  }
  Matrix out(energies.rows(), nc);
  std::vector<double> logs(nf);
  for (std::size_t t = 0; t < energies.rows(); ++t) {
    for (std::size_t n = 0; n < nf; ++n) logs[n] = std::log(std::max(energies(t, n), cfg.log_floor));
    for (std::size_t k = 0; k < nc; ++k) {
      const double offset = k == 0 ? 0.0 : logs[0];
      double acc = 0.0;
      for (std::size_t n = 0; n < nf; ++n) acc += basis(k, n) * (logs[n] - offset);
      out(t, k) = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prosody

struct PitchEstimate {
  double f0_hz = 0.0;
  double strength = 0.0;  // normalized autocorrelation at the chosen lag
  bool voiced = false;
};

/// Normalized autocorrelation pitch estimate with parabolic peak refinement.
/// The first local maximum reaching 90% of the global peak is taken, which
/// avoids picking a multiple of the true period. The longest lag examined
/// is capped at 3/4 of the frame so every correlation spans >= 1/4 frame.
inline PitchEstimate estimate_pitch(std::span<const double> frame, int sample_rate,
                                    const FrontendConfig &cfg) {
  const std::size_t len = frame.size();
  const auto lag_lo = static_cast<std::size_t>(std::max(1.0, std::floor(sample_rate / cfg.pitch_max_hz)));
  const auto lag_hi = std::min(static_cast<std::size_t>(std::ceil(sample_rate / cfg.pitch_min_hz)),
                               len * 3 / 4);
  PitchEstimate est;
  if (lag_hi <= lag_lo + 1) return est;

  std::vector<double> r(lag_hi + 2, 0.0);
  for (std::size_t lag = lag_lo - 1; lag <= lag_hi + 1 && lag < len; ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t n = 0; n + lag < len; ++n) {
      xy += frame[n] * frame[n + lag];
      xx += frame[n] * frame[n];
      yy += frame[n + lag] * frame[n + lag];
    }
    r[lag] = (xx > 0.0 && yy > 0.0) ? xy / std::sqrt(xx * yy) : 0.0;
  }
  std::size_t best = lag_lo;
  for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag)
    if (r[lag] > r[best]) best = lag;
  if (r[best] < cfg.voicing_threshold) return est;

  std::size_t chosen = best;
  for (std::size_t lag = lag_lo + 1; lag < lag_hi; ++lag) {
    if (r[lag] >= 0.9 * r[best] && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
      chosen = lag;
      break;
    }
  }
  double refined = static_cast<double>(chosen);
  const double a = r[chosen - 1], b = r[chosen], c = r[chosen + 1];
  const double denom = a - 2.0 * b + c;
  if (denom < 0.0) refined += std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  est.f0_hz = sample_rate / refined;
  est.strength = b;
  est.voiced = true;
  return est;
}

/// Half the log of the mean square, i.e. log RMS amplitude, floored.
inline double frame_log_energy(std::span<const double> frame, double floor) {
  double ms = 0.0;
  for (double v : frame) ms += v * v;
  ms /= static_cast<double>(frame.size());
  return 0.5 * std::log(std::max(ms, floor));
}

namespace detail {

/// Least-squares slope of y against x; 0 for fewer than two points.
inline double ls_slope(const std::vector<double> &x, const std::vector<double> &y) {
  if (x.size() < 2) return 0.0;
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace detail

struct ProsodyResult {
  Matrix features;  // T_p x 7
  std::vector<std::uint8_t> voiced;
};

/// One row per block of K frames:
///   F0 mean, F0 slope (Hz/frame), F0 range, log-energy mean,
///   log-energy slope (per frame), voiced fraction, block length in frames.
/// F0 statistics use voiced frames only and are 0 for unvoiced blocks.
inline ProsodyResult prosody(const Frames &frames, const FrontendConfig &cfg) {
  cfg.validate();
  const std::size_t count = frames.samples.rows();
  if (count == 0) throw ValidationError("no frames");
  const auto k = static_cast<std::size_t>(cfg.block_size);

  std::vector<PitchEstimate> pitch(count);
  std::vector<double> energy(count);
  for (std::size_t t = 0; t < count; ++t) {
    pitch[t] = estimate_pitch(frames.samples.row(t), frames.sample_rate, cfg);
    energy[t] = frame_log_energy(frames.samples.row(t), cfg.log_floor);
  }

  ProsodyResult out{Matrix(num_blocks(count, cfg.block_size), kProsodicDim), {}};
  for (std::size_t b = 0; b < out.features.rows(); ++b) {
    const std::size_t begin = b * k, end = std::min(count, begin + k);
    std::vector<double> f0_x, f0_y, e_x, e_y;
    for (std::size_t t = begin; t < end; ++t) {
      const auto rel = static_cast<double>(t - begin);
      e_x.push_back(rel);
      e_y.push_back(energy[t]);
      if (pitch[t].voiced) {
        f0_x.push_back(rel);
        f0_y.push_back(pitch[t].f0_hz);
      }
    }
    auto row = out.features.row(b);
    if (!f0_y.empty()) {
      row[0] = mean(f0_y);
      row[1] = detail::ls_slope(f0_x, f0_y);
      row[2] = *std::max_element(f0_y.begin(), f0_y.end()) - *std::min_element(f0_y.begin(), f0_y.end());
    }
    row[3] = mean(e_y);
    row[4] = detail::ls_slope(e_x, e_y);
    row[5] = static_cast<double>(f0_y.size()) / static_cast<double>(end - begin);
    row[6] = static_cast<double>(end - begin);
  }
  out.voiced = voicing_flags(out.features);
  return out;
}

/// Full front-end: both streams of one clip.
inline ObservationPair extract(const AudioClip &clip, const FrontendConfig &cfg,
                               std::string source = {}) {
  const Frames frames = frame_signal(clip, cfg);
  ObservationPair obs;
  obs.acoustic = mfcc(frames, cfg);
  auto pros = prosody(frames, cfg);
  obs.prosodic = std::move(pros.features);
  obs.voiced = std::move(pros.voiced);
  obs.source = std::move(source);
  check_observation(obs, cfg.block_size);
  return obs;
}

}  // namespace emoverify::frontend
