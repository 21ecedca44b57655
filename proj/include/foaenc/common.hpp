// Copyright 2026 The foaenc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

namespace foaenc {

using Vec3 = Eigen::Vector3d;
using cdouble = std::complex<double>;

// Channel-major sample buffers: buffers[channel][sample].
using ChannelBuffers = std::vector<std::vector<double>>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfSound = 343.0;
inline constexpr double kDefaultSampleRate = 24000.0;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Little-endian scalar I/O for the binary exchange formats.
template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  }
  os.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw Error("unexpected end of file");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

inline void put_magic(std::ostream& os, const char (&magic)[8]) {
  os.write(magic, 8);
}

inline void expect_magic(std::istream& is, const char (&magic)[8],
                         const std::string& what) {
  char buf[8];
  if (!is.read(buf, 8) || !std::equal(buf, buf + 8, magic)) {
    throw Error("not an " + what + " file (bad magic)");
  }
}

inline void put_complex64(std::ostream& os, cdouble z) {
  put_le(os, static_cast<float>(z.real()));
  put_le(os, static_cast<float>(z.imag()));
}

inline cdouble get_complex64(std::istream& is) {
  const float re = get_le<float>(is);
  const float im = get_le<float>(is);
  return {re, im};
}

}  // namespace detail

// FNV-1a, used to fingerprint source material recorded in scene metadata.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }
inline double amplitude_to_db(double a) { return 20.0 * std::log10(a); }

}  // namespace foaenc
