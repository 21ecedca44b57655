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

// Shoebox-room scene simulation. A scene is a room, an array position and
// one to three point sources; each source is expanded into image sources
// which are rendered both to the microphones of an open array of ideal
// omnidirectional capsules and, as far-field plane waves, to the Ambisonic
// channels at the array center.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "foaenc/common.hpp"
#include "foaenc/shmath.hpp"

namespace foaenc {

// ---------------------------------------------------------------------------
// Geometry

struct ArrayGeometry {
  std::vector<Vec3> positions;  // meters, relative to the array center

  std::size_t size() const { return positions.size(); }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : positions) c += p;
    return positions.empty() ? c : Vec3(c / static_cast<double>(size()));
  }

  double max_radius() const {
    const Vec3 c = centroid();
    double r = 0.0;
    for (const auto& p : positions) r = std::max(r, (p - c).norm());
    return r;
  }

  /// Throws if the geometry is empty, has coincident capsules or its
  /// centroid is not at `reference`.
  void validate(const Vec3& reference = Vec3::Zero(),
                double tolerance = 1e-6) const {
    if (positions.empty()) throw Error("array geometry has no microphones");
    for (const auto& p : positions) {
      if (!p.allFinite()) throw Error("array geometry has non-finite position");
    }
    if ((centroid() - reference).norm() > tolerance) {
      throw Error("array centroid is not at the reference point");
    }
    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j = i + 1; j < size(); ++j) {
        if (!((positions[i] - positions[j]).norm() > 0.0)) {
          throw Error("array geometry has coincident microphones " +
                      std::to_string(i) + " and " + std::to_string(j));
        }
      }
    }
  }

  /// Regular tetrahedron with vertices toward (1,1,1), (1,-1,-1),
  /// (-1,1,-1), (-1,-1,1).
  static ArrayGeometry tetrahedron(double radius = 0.09) {
    const double a = radius / std::sqrt(3.0);
    return {{Vec3(a, a, a), Vec3(a, -a, -a), Vec3(-a, a, -a),
             Vec3(-a, -a, a)}};
  }

  /// Four capsules at the ends of a slim phone-like body.
  static ArrayGeometry irregular() {
    return {{Vec3(0.08, 0.0, 0.03), Vec3(0.08, 0.0, -0.03),
             Vec3(-0.08, 0.005, 0.005), Vec3(-0.08, -0.005, -0.005)}};
  }
};

struct RoomSpec {
  Vec3 dimensions{5.0, 4.0, 3.0};  // x = width, y = depth, z = height
  double absorption = 0.5;         // energy absorption, all walls
  int max_image_order = 17;
  double speed_of_sound = kSpeedOfSound;

  bool contains(const Vec3& p) const {
    return (p.array() > 0.0).all() && (p.array() < dimensions.array()).all();
  }

  double wall_distance(const Vec3& p) const {
    return std::min((p.array()).minCoeff(),
                    (dimensions - p).array().minCoeff());
  }
};

/// Sampling ranges for randomized scenes.
struct SceneRanges {
  Vec3 min_dimensions{3.0, 3.0, 3.0};
  Vec3 max_dimensions{12.0, 20.0, 8.0};
  double min_absorption = 0.2;
  double max_absorption = 0.9;
  int max_image_order = 17;
  double speed_of_sound = kSpeedOfSound;
  double min_array_wall_distance = 1.0;
  double min_source_distance = 2.0;
  double source_wall_margin = 0.5;
  int min_sources = 1;
  int max_sources = 3;
  int max_attempts = 1000;
};

struct SceneSpec {
  RoomSpec room;
  Vec3 array_position = Vec3::Zero();
  std::vector<Vec3> source_positions;
  std::vector<std::string> source_signal_ids;
  std::uint64_t seed = 0;

  /// First violated constraint, if any.
  std::optional<std::string> violation(const SceneRanges& ranges = {}) const {
    for (int a = 0; a < 3; ++a) {
      if (room.dimensions[a] < ranges.min_dimensions[a] ||
          room.dimensions[a] > ranges.max_dimensions[a]) {
        return "room dimension " + std::to_string(a) + " out of range";
      }
    }
    if (!(room.absorption > 0.0 && room.absorption <= 1.0)) {
      return "absorption outside (0, 1]";
    }
    if (!room.contains(array_position) ||
        room.wall_distance(array_position) <
            ranges.min_array_wall_distance - 1e-12) {
      return "array closer than " +
             std::to_string(ranges.min_array_wall_distance) + " m to a wall";
    }
    const auto n = static_cast<int>(source_positions.size());
    if (n < ranges.min_sources || n > ranges.max_sources) {
      return "source count " + std::to_string(n) + " out of range";
    }
    for (const auto& s : source_positions) {
      if (!room.contains(s)) return "source outside the room";
      if ((s - array_position).norm() < ranges.min_source_distance - 1e-12) {
        return "source closer than " +
               std::to_string(ranges.min_source_distance) + " m to the array";
      }
    }
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Random scene sampling

namespace detail {

// Uniform doubles from raw 64-bit draws, independent of the standard
// library's distribution implementations.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : rng_(seed) {}
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int integer(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(rng_() % span);
  }
  std::uint64_t raw() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

}  // namespace detail

/// Draws a scene satisfying every SceneSpec constraint. Source signal ids
/// are left for the caller to fill in.
inline SceneSpec sample_scene_spec(std::uint64_t seed,
                                   const SceneRanges& ranges = {}) {
  for (int a = 0; a < 3; ++a) {
    if (!(ranges.min_dimensions[a] > 0.0) ||
        ranges.max_dimensions[a] < ranges.min_dimensions[a]) {
      throw Error("empty room dimension range on axis " + std::to_string(a));
    }
    if (ranges.max_dimensions[a] < 2.0 * ranges.min_array_wall_distance) {
      throw Error("room cannot keep the array " +
                  std::to_string(ranges.min_array_wall_distance) +
                  " m from the walls");
    }
  }
  if (ranges.min_sources < 1 || ranges.max_sources < ranges.min_sources) {
    throw Error("empty source count range");
  }
  if (!(ranges.min_absorption > 0.0) || ranges.max_absorption > 1.0 ||
      ranges.max_absorption < ranges.min_absorption) {
    throw Error("absorption range must lie in (0, 1]");
  }

  detail::UniformSource rng(seed);
  std::string last_failure = "no attempt made";
  for (int attempt = 0; attempt < ranges.max_attempts; ++attempt) {
    SceneSpec spec;
    spec.seed = seed;
    spec.room.max_image_order = ranges.max_image_order;
    spec.room.speed_of_sound = ranges.speed_of_sound;
    for (int a = 0; a < 3; ++a) {
      // Rooms too small for the array clearance are redrawn.
      const double lo = std::max(ranges.min_dimensions[a],
                                 2.0 * ranges.min_array_wall_distance);
      spec.room.dimensions[a] = rng.range(lo, ranges.max_dimensions[a]);
    }
    spec.room.absorption =
        rng.range(ranges.min_absorption, ranges.max_absorption);
    for (int a = 0; a < 3; ++a) {
      spec.array_position[a] =
          rng.range(ranges.min_array_wall_distance,
                    spec.room.dimensions[a] - ranges.min_array_wall_distance);
    }
    const int count = rng.integer(ranges.min_sources, ranges.max_sources);
    const double margin = std::min(ranges.source_wall_margin,
                                   0.5 * spec.room.dimensions.minCoeff());
    bool placed_all = true;
    for (int s = 0; s < count && placed_all; ++s) {
      bool placed = false;
      for (int tries = 0; tries < 100 && !placed; ++tries) {
        Vec3 p;
        for (int a = 0; a < 3; ++a) {
          p[a] = rng.range(margin, spec.room.dimensions[a] - margin);
        }
        if ((p - spec.array_position).norm() >= ranges.min_source_distance) {
          spec.source_positions.push_back(p);
          placed = true;
        }
      }
      placed_all = placed;
    }
    if (!placed_all) {
      last_failure = "source-array distance >= " +
                     std::to_string(ranges.min_source_distance) + " m";
      continue;
    }
    if (auto v = spec.violation(ranges)) {
      last_failure = *v;
      continue;
    }
    return spec;
  }
  throw Error("could not sample a valid scene after " +
              std::to_string(ranges.max_attempts) +
              " attempts; violated constraint: " + last_failure);
}

// ---------------------------------------------------------------------------
// Image sources

struct ImageSource {
  Vec3 position;
  double amplitude = 1.0;  // reflection attenuation, before 1/r
  int order = 0;
};

struct ImageSourceSet {
  std::vector<ImageSource> images;  // images[0] is the direct path
  double speed_of_sound = kSpeedOfSound;
};

/// Images below this level relative to the direct path are dropped.
inline constexpr double kImageTruncationDb = -80.0;

/// Allen-Berkley enumeration for a shoebox room. Per axis an image is
/// (1 - 2q) * s + 2 m L with q in {0, 1}; it has |m - q| reflections off the
/// wall at 0 and |m| off the wall at L. Amplitude per reflection is
/// sqrt(1 - absorption).
inline ImageSourceSet image_sources(const RoomSpec& room, const Vec3& source,
                                    const Vec3& listener) {
  if (!room.contains(source)) throw Error("source is not inside the room");
  if (!room.contains(listener)) throw Error("listener is not inside the room");
  if (room.max_image_order < 0) throw Error("max_image_order must be >= 0");
  if (!(room.absorption > 0.0 && room.absorption <= 1.0)) {
    throw Error("absorption must lie in (0, 1]");
  }

  const int k = room.max_image_order;
  const double beta = std::sqrt(1.0 - room.absorption);
  const double direct_level = 1.0 / std::max((source - listener).norm(), 1e-9);
  const double floor = direct_level * db_to_amplitude(kImageTruncationDb);

  ImageSourceSet set;
  set.speed_of_sound = room.speed_of_sound;
  set.images.push_back({source, 1.0, 0});
  for (int mx = -k; mx <= k; ++mx) {
    for (int qx = 0; qx <= 1; ++qx) {
      const int ox = std::abs(mx - qx) + std::abs(mx);
      if (ox > k) continue;
      for (int my = -k; my <= k; ++my) {
        for (int qy = 0; qy <= 1; ++qy) {
          const int oy = std::abs(my - qy) + std::abs(my);
          if (ox + oy > k) continue;
          for (int mz = -k; mz <= k; ++mz) {
            for (int qz = 0; qz <= 1; ++qz) {
              const int oz = std::abs(mz - qz) + std::abs(mz);
              const int order = ox + oy + oz;
              if (order > k || order == 0) continue;
              const Vec3 m(mx, my, mz);
              const Vec3 sign(1 - 2 * qx, 1 - 2 * qy, 1 - 2 * qz);
              const Vec3 pos = sign.cwiseProduct(source) +
                               2.0 * m.cwiseProduct(room.dimensions);
              const double amp = std::pow(beta, order);
              if (amp / (pos - listener).norm() < floor) continue;
              set.images.push_back({pos, amp, order});
            }
          }
        }
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Rendering

inline constexpr int kFractionalDelayHalfTaps = 40;

/// Windowed-sinc fractional-delay tap for an offset t = n - delay. The
/// raised-cosine window spans |t| < kFractionalDelayHalfTaps, so a kernel
/// has 81 taps at integer delays and 80 otherwise. `sin_pi_t` must equal
/// sin(pi * t); callers supply it so integer delays give exact zeros.
inline double windowed_sinc_tap(double t, double sin_pi_t) {
  constexpr double half_width = kFractionalDelayHalfTaps;
  if (std::abs(t) >= half_width) return 0.0;
  const double window = 0.5 * (1.0 + std::cos(kPi * t / half_width));
  if (t == 0.0) return window;
  return sin_pi_t / (kPi * t) * window;
}

/// Adds gain * (fractionally delayed unit impulse) to `buffer`.
inline void add_fractional_impulse(std::vector<double>& buffer, double delay,
                                   double gain) {
  const double base = std::floor(delay);
  const double frac = delay - base;
  const double sin_frac = std::sin(kPi * frac);
  const auto center = static_cast<std::ptrdiff_t>(base);
  for (int k = -kFractionalDelayHalfTaps; k <= kFractionalDelayHalfTaps; ++k) {
    const std::ptrdiff_t n = center + k;
    if (n < 0 || n >= static_cast<std::ptrdiff_t>(buffer.size())) continue;
    // sin(pi (k - frac)) = -(-1)^k sin(pi frac)
    const double s = (k % 2 == 0) ? -sin_frac : sin_frac;
    buffer[static_cast<std::size_t>(n)] +=
        gain * windowed_sinc_tap(static_cast<double>(k) - frac, s);
  }
}

/// Samples needed to hold every image's delayed kernel.
inline std::size_t rir_length(const ImageSourceSet& images,
                              const std::vector<Vec3>& receivers,
                              double sample_rate) {
  double max_delay = 0.0;
  for (const auto& img : images.images) {
    for (const auto& r : receivers) {
      max_delay = std::max(max_delay, (img.position - r).norm() * sample_rate /
                                          images.speed_of_sound);
    }
  }
  return static_cast<std::size_t>(std::floor(max_delay)) +
         kFractionalDelayHalfTaps + 1;
}

inline constexpr double kMinRenderDistance = 1e-3;

/// Q x L microphone RIRs: sum over images of amplitude / r_q at delay r_q / c.
inline ChannelBuffers render_mic_rirs(const ImageSourceSet& images,
                                      const ArrayGeometry& array,
                                      const Vec3& array_position,
                                      double sample_rate,
                                      std::size_t length = 0) {
  if (!(sample_rate > 0.0)) throw Error("sample_rate must be positive");
  std::vector<Vec3> mics;
  for (const auto& p : array.positions) mics.push_back(array_position + p);
  if (length == 0) length = rir_length(images, mics, sample_rate);
  ChannelBuffers out(mics.size(), std::vector<double>(length, 0.0));
  for (std::size_t q = 0; q < mics.size(); ++q) {
    for (const auto& img : images.images) {
      const double r = (img.position - mics[q]).norm();
      if (r < kMinRenderDistance) {
        throw Error("image source colocated with microphone " +
                    std::to_string(q));
      }
      add_fractional_impulse(out[q], r * sample_rate / images.speed_of_sound,
                             img.amplitude / r);
    }
  }
  return out;
}

/// (N+1)^2 x L Ambisonic RIRs at the array center; each image is a
/// far-field point source encoded with y_N of its direction.
inline ChannelBuffers render_ambi_rirs(const ImageSourceSet& images,
                                       const Vec3& array_position,
                                       const SHConfig& config,
                                       double sample_rate,
                                       std::size_t length = 0) {
  if (!(sample_rate > 0.0)) throw Error("sample_rate must be positive");
  if (length == 0) length = rir_length(images, {array_position}, sample_rate);
  ChannelBuffers out(config.channels(), std::vector<double>(length, 0.0));
  for (const auto& img : images.images) {
    const Vec3 v = img.position - array_position;
    const double r = v.norm();
    if (r < kMinRenderDistance) {
      throw Error("image source colocated with the array center");
    }
    const SHVector y = eval_real_sh(Direction::from_vector(v), config);
    const double delay = r * sample_rate / images.speed_of_sound;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y[k] == 0.0) continue;
      add_fractional_impulse(out[k], delay, img.amplitude / r * y[k]);
    }
  }
  return out;
}

struct RIRSet {
  ChannelBuffers mic_rirs;
  ChannelBuffers ambi_rirs;
  double sample_rate = kDefaultSampleRate;
};

// ---------------------------------------------------------------------------
// Scene synthesis

struct MonoSignal {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;
};

struct SceneRenderConfig {
  ArrayGeometry array = ArrayGeometry::tetrahedron();
  SHConfig sh;
  double sample_rate = kDefaultSampleRate;
  double scene_seconds = 2.0;

  std::size_t scene_samples() const {
    return static_cast<std::size_t>(std::llround(scene_seconds * sample_rate));
  }
};

struct SceneAudio {
  ChannelBuffers mics;       // Q x S
  ChannelBuffers reference;  // (N+1)^2 x S
};

/// Linear convolution of one signal with several kernels, truncated to
/// `out_length`, via a shared FFT of the signal.
inline ChannelBuffers fft_convolve(const std::vector<double>& signal,
                                   const ChannelBuffers& kernels,
                                   std::size_t out_length) {
  std::size_t kernel_len = 0;
  for (const auto& k : kernels) kernel_len = std::max(kernel_len, k.size());
  std::size_t n = 1;
  while (n < signal.size() + kernel_len) n <<= 1;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> padded(n, 0.0);
  std::copy(signal.begin(), signal.end(), padded.begin());
  std::vector<cdouble> sig_spec, ker_spec;
  fft.fwd(sig_spec, padded);

  ChannelBuffers out;
  std::vector<double> time;
  for (const auto& k : kernels) {
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(k.begin(), k.end(), padded.begin());
    fft.fwd(ker_spec, padded);
    for (std::size_t i = 0; i < ker_spec.size(); ++i) ker_spec[i] *= sig_spec[i];
    fft.inv(time, ker_spec, static_cast<Eigen::Index>(n));
    time.resize(out_length, 0.0);
    out.push_back(time);
  }
  return out;
}

inline RIRSet render_rirs(const SceneSpec& spec, const Vec3& source,
                          const SceneRenderConfig& config) {
  const ImageSourceSet images =
      image_sources(spec.room, source, spec.array_position);
  std::vector<Vec3> receivers{spec.array_position};
  for (const auto& p : config.array.positions) {
    receivers.push_back(spec.array_position + p);
  }
  const std::size_t length = rir_length(images, receivers, config.sample_rate);
  return {render_mic_rirs(images, config.array, spec.array_position,
                          config.sample_rate, length),
          render_ambi_rirs(images, spec.array_position, config.sh,
                           config.sample_rate, length),
          config.sample_rate};
}

/// Renders microphone and reference Ambisonic signals for a scene,
/// each exactly scene_samples() long.
inline SceneAudio synth_scene(const SceneSpec& spec,
                              const std::vector<MonoSignal>& sources,
                              const SceneRenderConfig& config = {}) {
  if (sources.size() != spec.source_positions.size()) {
    throw Error("synth_scene: " + std::to_string(sources.size()) +
                " signals for " +
                std::to_string(spec.source_positions.size()) + " sources");
  }
  const std::size_t length = config.scene_samples();
  for (const auto& s : sources) {
    if (s.sample_rate != config.sample_rate) {
      throw Error("synth_scene: source sample rate " +
                  std::to_string(s.sample_rate) + " Hz does not match " +
                  std::to_string(config.sample_rate) + " Hz");
    }
    if (s.samples.size() < length) {
      throw Error("synth_scene: source signal shorter than the scene length");
    }
  }

  SceneAudio audio{
      ChannelBuffers(config.array.size(), std::vector<double>(length, 0.0)),
      ChannelBuffers(config.sh.channels(), std::vector<double>(length, 0.0))};
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const RIRSet rirs = render_rirs(spec, spec.source_positions[i], config);
    ChannelBuffers kernels = rirs.mic_rirs;
    kernels.insert(kernels.end(), rirs.ambi_rirs.begin(), rirs.ambi_rirs.end());
    const std::vector<double> signal(sources[i].samples.begin(),
                                     sources[i].samples.begin() +
                                         static_cast<std::ptrdiff_t>(length));
    const ChannelBuffers rendered = fft_convolve(signal, kernels, length);
    for (std::size_t q = 0; q < audio.mics.size(); ++q) {
      for (std::size_t s = 0; s < length; ++s) audio.mics[q][s] += rendered[q][s];
    }
    for (std::size_t k = 0; k < audio.reference.size(); ++k) {
      const auto& r = rendered[audio.mics.size() + k];
      for (std::size_t s = 0; s < length; ++s) audio.reference[k][s] += r[s];
    }
  }
  return audio;
}

/// Deterministic stand-in excitation: colored noise with a random spectral
/// tilt, a random band emphasis and a slow amplitude envelope.
inline MonoSignal synthetic_source(std::uint64_t seed, std::size_t samples,
                                   double sample_rate = kDefaultSampleRate) {
  detail::UniformSource rng(seed);

  const double tilt = rng.range(-0.95, 0.95);  // one-pole coefficient
  const double center_hz = rng.range(150.0, 4000.0);
  const double q = rng.range(0.7, 4.0);
  const double env_rate = rng.range(0.5, 6.0);
  const double env_phase = rng.range(0.0, 2.0 * kPi);
  const double env_depth = rng.range(0.2, 0.8);

  // RBJ band-pass biquad added to the tilted noise.
  const double w0 = 2.0 * kPi * center_hz / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;

  MonoSignal out{std::vector<double>(samples), sample_rate};
  double lp = 0.0, x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
  double peak = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    const double white = 2.0 * rng.unit() - 1.0;
    lp = white + tilt * lp;
    const double bp = b0 * white + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = white;
    y2 = y1;
    y1 = bp;
    const double t = static_cast<double>(n) / sample_rate;
    const double env =
        1.0 - env_depth * 0.5 * (1.0 + std::sin(2.0 * kPi * env_rate * t +
                                                env_phase));
    out.samples[n] = env * ((1.0 - std::abs(tilt)) * lp + 3.0 * bp);
    peak = std::max(peak, std::abs(out.samples[n]));
  }
  if (peak > 0.0) {
    for (double& v : out.samples) v *= 0.5 / peak;
  }
  return out;
}

}  // namespace foaenc
