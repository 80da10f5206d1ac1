// emoverify/binary_io.hpp

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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "emoverify/common.hpp"

namespace emoverify::io {

// All multi-byte values are little-endian on disk regardless of host order.

template <typename T>
inline T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }
}

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream &out) : out_(out) {}

  void magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }

  void u32(std::uint32_t v) { raw(to_little_endian(v)); }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    raw(to_little_endian(bits));
  }

  void f64s(std::span<const double> values) {
    for (double v : values) f64(v);
  }

 private:
  template <typename T>
  void raw(T v) {
    out_.write(reinterpret_cast<const char *>(&v), sizeof v);
    if (!out_) throw Error("write failed");
  }
  std::ostream &out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream &in, std::string what) : in_(in), what_(std::move(what)) {}

  void expect_magic(std::string_view tag) {
    std::string got(tag.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(tag.size()));
    if (!in_ || got != tag) throw FormatError(what_ + ": bad magic, expected " + std::string(tag));
  }

  std::uint32_t u32() { return to_little_endian(raw<std::uint32_t>()); }

  double f64() {
    const std::uint64_t bits = to_little_endian(raw<std::uint64_t>());
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  void f64s(std::span<double> out) {
    for (double &v : out) v = f64();
  }

  /// Throws unless the stream is fully consumed.
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw FormatError(what_ + ": trailing bytes");
  }

 private:
  template <typename T>
  T raw() {
    T v;
    in_.read(reinterpret_cast<char *>(&v), sizeof v);
    if (!in_) throw FormatError(what_ + ": truncated");
    return v;
  }
  std::istream &in_;
  std::string what_;
};

}  // namespace emoverify::io
