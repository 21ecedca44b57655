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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "foaenc/common.hpp"

namespace foaenc {

enum class WindowType { kHann };

struct STFTConfig {
  std::size_t fft_size = 1024;
  std::size_t hop = 512;
  WindowType window = WindowType::kHann;
  double sample_rate = kDefaultSampleRate;

  std::size_t bins() const { return fft_size / 2 + 1; }
  double bin_frequency(std::size_t f) const {
    return static_cast<double>(f) * sample_rate /
           static_cast<double>(fft_size);
  }
};

/// Complex time-frequency block, T x F x C, stored t-major, then f, then c.
/// Frame t is centered on sample t * hop.
class STFTTensor {
 public:
  STFTTensor() = default;
  STFTTensor(std::size_t frames, std::size_t bins, std::size_t channels,
             const STFTConfig& config = {})
      : frames_(frames),
        bins_(bins),
        channels_(channels),
        config_(config),
        data_(frames * bins * channels) {}

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t channels() const { return channels_; }
  const STFTConfig& config() const { return config_; }
  void set_config(const STFTConfig& c) { config_ = c; }

  cdouble& operator()(std::size_t t, std::size_t f, std::size_t c) {
    return data_[(t * bins_ + f) * channels_ + c];
  }
  cdouble operator()(std::size_t t, std::size_t f, std::size_t c) const {
    return data_[(t * bins_ + f) * channels_ + c];
  }

  std::vector<cdouble>& data() { return data_; }
  const std::vector<cdouble>& data() const { return data_; }

  bool same_shape(const STFTTensor& o) const {
    return frames_ == o.frames_ && bins_ == o.bins_ && channels_ == o.channels_;
  }

  std::string shape_string() const {
    return std::to_string(frames_) + "x" + std::to_string(bins_) + "x" +
           std::to_string(channels_);
  }

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::size_t channels_ = 0;
  STFTConfig config_;
  std::vector<cdouble> data_;
};

/// Periodic analysis window of length fft_size.
inline std::vector<double> make_window(const STFTConfig& config) {
  std::vector<double> w(config.fft_size);
  const double n = static_cast<double>(config.fft_size);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / n);
  }
  return w;
}

inline std::size_t stft_frame_count(std::size_t length, std::size_t hop) {
  return 1 + length / hop;
}

namespace detail {

inline void validate_config(const STFTConfig& c) {
  if (c.fft_size < 2 || c.fft_size % 2 != 0) {
    throw Error("fft_size must be even and >= 2");
  }
  if (c.hop == 0 || c.hop > c.fft_size) {
    throw Error("hop must be in [1, fft_size]");
  }
  if (!(c.sample_rate > 0.0)) throw Error("sample_rate must be positive");
}

}  // namespace detail

inline STFTTensor stft(const ChannelBuffers& signal,
                       const STFTConfig& config = {}) {
  detail::validate_config(config);
  if (signal.empty() || signal.front().empty()) {
    throw Error("stft: empty signal");
  }
  const std::size_t length = signal.front().size();
  for (const auto& ch : signal) {
    if (ch.size() != length) throw Error("stft: channel lengths differ");
  }
  if (length < config.fft_size) {
    throw Error("stft: signal shorter than fft_size");
  }

  const std::size_t n = config.fft_size;
  const std::size_t half = n / 2;
  const std::size_t frames = stft_frame_count(length, config.hop);
  const std::vector<double> window = make_window(config);
  STFTTensor out(frames, config.bins(), signal.size(), config);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(n);
  std::vector<cdouble> spectrum;
  for (std::size_t c = 0; c < signal.size(); ++c) {
    const auto& x = signal[c];
    for (std::size_t t = 0; t < frames; ++t) {
      const auto start =
          static_cast<std::ptrdiff_t>(t * config.hop) -
          static_cast<std::ptrdiff_t>(half);
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(i);
        const double v = (s >= 0 && s < static_cast<std::ptrdiff_t>(length))
                             ? x[static_cast<std::size_t>(s)]
                             : 0.0;
        frame[i] = v * window[i];
      }
      fft.fwd(spectrum, frame);
      for (std::size_t f = 0; f < out.bins(); ++f) out(t, f, c) = spectrum[f];
    }
  }
  return out;
}

/// Smallest value of sum_k w^2(n + k*hop) over one hop period. Weighted
/// overlap-add synthesis requires it to be nonzero.
inline double overlap_add_floor(const STFTConfig& config) {
  const std::vector<double> w = make_window(config);
  double floor = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < config.hop; ++n) {
    double sum = 0.0;
    for (std::size_t i = n; i < w.size(); i += config.hop) sum += w[i] * w[i];
    floor = std::min(floor, sum);
  }
  return floor;
}

/// Weighted overlap-add inverse. `length` defaults to (T - 1) * hop.
inline ChannelBuffers istft(const STFTTensor& tensor, std::size_t length = 0) {
  const STFTConfig& config = tensor.config();
  detail::validate_config(config);
  if (tensor.bins() != config.bins()) {
    throw Error("istft: tensor has " + std::to_string(tensor.bins()) +
                " bins, config expects " + std::to_string(config.bins()));
  }
  if (overlap_add_floor(config) < 1e-10) {
    throw Error("istft: window/hop combination does not overlap-add "
                "to a nonzero envelope");
  }
  const std::size_t n = config.fft_size;
  const std::size_t half = n / 2;
  if (length == 0) length = (tensor.frames() - 1) * config.hop;

  const std::vector<double> window = make_window(config);
  std::vector<double> envelope(length, 0.0);
  for (std::size_t t = 0; t < tensor.frames(); ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * config.hop) -
                       static_cast<std::ptrdiff_t>(half);
    for (std::size_t i = 0; i < n; ++i) {
      const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(i);
      if (s >= 0 && s < static_cast<std::ptrdiff_t>(length)) {
        envelope[static_cast<std::size_t>(s)] += window[i] * window[i];
      }
    }
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  ChannelBuffers out(tensor.channels(), std::vector<double>(length, 0.0));
  std::vector<cdouble> spectrum(config.bins());
  std::vector<double> frame;
  for (std::size_t c = 0; c < tensor.channels(); ++c) {
    for (std::size_t t = 0; t < tensor.frames(); ++t) {
      for (std::size_t f = 0; f < config.bins(); ++f) {
        spectrum[f] = tensor(t, f, c);
      }
      fft.inv(frame, spectrum, static_cast<Eigen::Index>(n));
      const auto start = static_cast<std::ptrdiff_t>(t * config.hop) -
                         static_cast<std::ptrdiff_t>(half);
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(i);
        if (s >= 0 && s < static_cast<std::ptrdiff_t>(length)) {
          out[c][static_cast<std::size_t>(s)] += window[i] * frame[i];
        }
      }
    }
    for (std::size_t s = 0; s < length; ++s) {
      out[c][s] = envelope[s] > 1e-12 ? out[c][s] / envelope[s] : 0.0;
    }
  }
  return out;
}

/// Real feature block T x F x 2C with layout [Re(c0), Im(c0), Re(c1), ...].
struct RealFeatures {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  double& operator()(std::size_t t, std::size_t f, std::size_t c) {
    return data[(t * bins + f) * channels + c];
  }
  double operator()(std::size_t t, std::size_t f, std::size_t c) const {
    return data[(t * bins + f) * channels + c];
  }
};

inline RealFeatures pack_real_imag(const STFTTensor& tensor) {
  RealFeatures out{tensor.frames(), tensor.bins(), 2 * tensor.channels(),
                   std::vector<double>(tensor.data().size() * 2)};
  for (std::size_t i = 0; i < tensor.data().size(); ++i) {
    out.data[2 * i] = tensor.data()[i].real();
    out.data[2 * i + 1] = tensor.data()[i].imag();
  }
  return out;
}

inline STFTTensor unpack_real_imag(const RealFeatures& features,
                                   const STFTConfig& config = {}) {
  if (features.channels % 2 != 0) {
    throw Error("unpack_real_imag: odd feature channel count " +
                std::to_string(features.channels));
  }
  if (features.data.size() !=
      features.frames * features.bins * features.channels) {
    throw Error("unpack_real_imag: data size does not match shape");
  }
  STFTTensor out(features.frames, features.bins, features.channels / 2,
                 config);
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    out.data()[i] = {features.data[2 * i], features.data[2 * i + 1]};
  }
  return out;
}

// AMBTEN1 flags.
inline constexpr std::uint32_t kTensorCentered = 1u << 0;
inline constexpr std::uint32_t kTensorHann = 1u << 1;
inline constexpr int kTensorHopShift = 8;  // bits 8..15: log2(fft_size / hop)

inline constexpr char kTensorMagic[8] = {'A', 'M', 'B', 'T', 'E', 'N', '1', '\0'};

inline void write_tensor(const std::string& path, const STFTTensor& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  const STFTConfig& c = tensor.config();
  if (c.hop == 0 || c.fft_size % c.hop != 0 ||
      !std::has_single_bit(c.fft_size / c.hop)) {
    throw Error("AMBTEN1 requires fft_size / hop to be a power of two");
  }
  std::uint32_t flags = kTensorCentered | kTensorHann;
  flags |= static_cast<std::uint32_t>(std::countr_zero(c.fft_size / c.hop))
           << kTensorHopShift;
  detail::put_magic(os, kTensorMagic);
  detail::put_le(os, static_cast<std::uint32_t>(tensor.frames()));
  detail::put_le(os, static_cast<std::uint32_t>(tensor.bins()));
  detail::put_le(os, static_cast<std::uint32_t>(tensor.channels()));
  detail::put_le(os, flags);
  for (const cdouble& z : tensor.data()) detail::put_complex64(os, z);
  if (!os) throw Error("write failed: " + path);
}

inline STFTTensor read_tensor(const std::string& path,
                              double sample_rate = kDefaultSampleRate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  detail::expect_magic(is, kTensorMagic, "AMBTEN1");
  const auto frames = detail::get_le<std::uint32_t>(is);
  const auto bins = detail::get_le<std::uint32_t>(is);
  const auto channels = detail::get_le<std::uint32_t>(is);
  const auto flags = detail::get_le<std::uint32_t>(is);
  if (bins < 2) throw Error("AMBTEN1: bin count must be >= 2");
  STFTConfig config;
  config.sample_rate = sample_rate;
  config.fft_size = 2 * (static_cast<std::size_t>(bins) - 1);
  config.hop = config.fft_size >> ((flags >> kTensorHopShift) & 0xFFu);
  if (config.hop == 0) throw Error("AMBTEN1: invalid hop encoding");
  STFTTensor out(frames, bins, channels, config);
  for (cdouble& z : out.data()) z = detail::get_complex64(is);
  return out;
}

}  // namespace foaenc
