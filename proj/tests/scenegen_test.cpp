#include <cmath>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include <gtest/gtest.h>

#include "foaenc/scenegen.hpp"

namespace foaenc {
namespace {

using Key = std::tuple<long, long, long>;

Key key_of(const Vec3& p) {
  return {std::lround(p.x() * 1e6), std::lround(p.y() * 1e6),
          std::lround(p.z() * 1e6)};
}

// Images reached by repeatedly mirroring across the six walls, keyed by
// position, with the fewest reflections needed to reach each one.
std::map<Key, int> mirror_enumeration(const Vec3& dims, const Vec3& src,
                                      int max_order) {
  std::map<Key, int> seen{{key_of(src), 0}};
  std::vector<Vec3> frontier{src};
  for (int order = 1; order <= max_order; ++order) {
    std::vector<Vec3> next;
    for (const Vec3& p : frontier) {
      for (int a = 0; a < 3; ++a) {
        for (double wall : {0.0, dims[a]}) {
          Vec3 q = p;
          q[a] = 2.0 * wall - p[a];
          if (seen.emplace(key_of(q), order).second) next.push_back(q);
        }
      }
    }
    frontier = std::move(next);
  }
  return seen;
}

double oracle_tap(double t) {
  if (std::abs(t) >= 40.0) return 0.0;
  const double window = 0.5 * (1.0 + std::cos(kPi * t / 40.0));
  if (t == 0.0) return 1.0;
  return std::sin(kPi * t) / (kPi * t) * window;
}

// Dense time-domain renderer: every output sample sums every image.
ChannelBuffers brute_force_rirs(const ImageSourceSet& images,
                                const std::vector<Vec3>& receivers,
                                double sample_rate, std::size_t length) {
  ChannelBuffers out(receivers.size(), std::vector<double>(length, 0.0));
  for (std::size_t q = 0; q < receivers.size(); ++q) {
    for (std::size_t n = 0; n < length; ++n) {
      double acc = 0.0;
      for (const auto& img : images.images) {
        const double r = (img.position - receivers[q]).norm();
        const double d = r * sample_rate / images.speed_of_sound;
        acc += img.amplitude / r * oracle_tap(static_cast<double>(n) - d);
      }
      out[q][n] = acc;
    }
  }
  return out;
}

TEST(ImageSources, FirstOrderHasSevenImages) {
  RoomSpec room;
  room.dimensions = {4.0, 5.0, 3.0};
  room.max_image_order = 1;
  const Vec3 src(1.0, 2.0, 1.5);
  const ImageSourceSet set = image_sources(room, src, {3.0, 3.0, 1.2});
  ASSERT_EQ(set.images.size(), 7u);
  EXPECT_EQ(set.images[0].order, 0);
  EXPECT_EQ((set.images[0].position - src).norm(), 0.0);
  bool found = false;
  for (const auto& img : set.images) {
    if (std::abs(img.position.x() - (2.0 * 4.0 - 1.0)) < 1e-12 &&
        img.position.y() == 2.0 && img.position.z() == 1.5) {
      found = true;
      EXPECT_EQ(img.order, 1);
      EXPECT_NEAR(img.amplitude, std::sqrt(1.0 - room.absorption), 1e-15);
    }
  }
  EXPECT_TRUE(found);
}

TEST(ImageSources, MatchesMirrorEnumeration) {
  RoomSpec room;
  room.dimensions = {4.0, 5.0, 3.0};
  room.absorption = 0.3;
  const Vec3 src(1.3, 3.1, 0.7), listener(2.2, 1.4, 1.9);
  for (int order : {2, 3, 4}) {
    room.max_image_order = order;
    const ImageSourceSet set = image_sources(room, src, listener);
    const auto oracle = mirror_enumeration(room.dimensions, src, order);
    ASSERT_EQ(set.images.size(), oracle.size()) << "order " << order;
    for (const auto& img : set.images) {
      const auto it = oracle.find(key_of(img.position));
      ASSERT_NE(it, oracle.end());
      EXPECT_EQ(img.order, it->second);
      EXPECT_NEAR(img.amplitude, std::pow(std::sqrt(0.7), it->second), 1e-14);
    }
  }
}

TEST(ImageSources, FullAbsorptionLeavesDirectPath) {
  RoomSpec room;
  room.absorption = 1.0;
  room.max_image_order = 5;
  const ImageSourceSet set =
      image_sources(room, {1.0, 1.0, 1.0}, {3.0, 2.0, 2.0});
  for (const auto& img : set.images) {
    if (img.order > 0) {
      EXPECT_EQ(img.amplitude, 0.0);
    }
  }
  EXPECT_EQ(set.images.front().amplitude, 1.0);
}

TEST(ImageSources, WeakImagesTruncated) {
  RoomSpec room;
  room.absorption = 0.9;
  room.max_image_order = 17;
  const Vec3 src(1.0, 1.0, 1.0), listener(3.0, 2.0, 2.0);
  const ImageSourceSet set = image_sources(room, src, listener);
  const double direct = 1.0 / (src - listener).norm();
  for (const auto& img : set.images) {
    EXPECT_GE(img.amplitude / (img.position - listener).norm(),
              direct * 1e-4);
  }
  EXPECT_LT(set.images.size(), 2000u);
}

TEST(ImageSources, RejectsBadInput) {
  RoomSpec room;
  EXPECT_THROW(image_sources(room, {-1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}), Error);
  EXPECT_THROW(image_sources(room, {1.0, 1.0, 1.0}, {1.0, 9.0, 1.0}), Error);
  room.absorption = 0.0;
  EXPECT_THROW(image_sources(room, {1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}), Error);
}

TEST(FractionalDelay, IntegerDelayIsSingleTap) {
  std::vector<double> buf(300, 0.0);
  add_fractional_impulse(buf, 200.0, 0.4);
  for (std::size_t n = 0; n < buf.size(); ++n) {
    EXPECT_EQ(buf[n], n == 200 ? 0.4 : 0.0) << n;
  }
}

TEST(FractionalDelay, MatchesDenseSinc) {
  for (double delay : {50.25, 77.5, 120.999, 41.0001}) {
    std::vector<double> buf(200, 0.0);
    add_fractional_impulse(buf, delay, 1.0);
    for (std::size_t n = 0; n < buf.size(); ++n) {
      EXPECT_NEAR(buf[n], oracle_tap(static_cast<double>(n) - delay), 1e-13);
    }
  }
}

TEST(FractionalDelay, PassesLowFrequencies) {
  // The kernel sums to ~1 (unit DC gain) for any fractional offset.
  for (double frac : {0.0, 0.1, 0.5, 0.9}) {
    std::vector<double> buf(200, 0.0);
    add_fractional_impulse(buf, 100.0 + frac, 1.0);
    double sum = 0.0;
    for (double v : buf) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-3);
  }
}

TEST(RenderMicRirs, OnSampleImpulse) {
  ImageSourceSet set;
  set.speed_of_sound = 300.0;
  set.images.push_back({Vec3(2.5, 0.0, 0.0), 1.0, 0});
  ArrayGeometry one{{Vec3::Zero()}};
  const ChannelBuffers rir = render_mic_rirs(set, one, Vec3::Zero(), 24000.0);
  ASSERT_EQ(rir.size(), 1u);
  EXPECT_EQ(rir[0].size(), 200u + 41u);
  for (std::size_t n = 0; n < rir[0].size(); ++n) {
    EXPECT_EQ(rir[0][n], n == 200 ? 1.0 / 2.5 : 0.0);
  }
}

TEST(RenderMicRirs, EquidistantMicsIdentical) {
  ImageSourceSet set;
  set.images.push_back({Vec3(0.0, 0.0, 2.0), 0.8, 0});
  ArrayGeometry pair{{Vec3(0.05, 0.0, 0.0), Vec3(-0.05, 0.0, 0.0)}};
  const ChannelBuffers rir = render_mic_rirs(set, pair, Vec3::Zero(), 24000.0);
  for (std::size_t n = 0; n < rir[0].size(); ++n) {
    EXPECT_NEAR(rir[0][n], rir[1][n], 1e-12);
  }
}

TEST(RenderMicRirs, MatchesBruteForceRenderer) {
  RoomSpec room;
  room.dimensions = {4.0, 5.0, 3.0};
  room.absorption = 0.35;
  room.max_image_order = 2;
  const Vec3 array_pos(2.1, 2.4, 1.3);
  const ImageSourceSet images = image_sources(room, {0.9, 3.8, 1.7}, array_pos);
  const ArrayGeometry tetra = ArrayGeometry::tetrahedron();
  const ChannelBuffers rir = render_mic_rirs(images, tetra, array_pos, 24000.0);
  std::vector<Vec3> mics;
  for (const auto& p : tetra.positions) mics.push_back(array_pos + p);
  const ChannelBuffers ref =
      brute_force_rirs(images, mics, 24000.0, rir[0].size());
  double peak = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::size_t q = 0; q < ref.size(); ++q) {
    for (std::size_t n = 0; n < ref[q].size(); ++n) {
      peak = std::max(peak, std::abs(ref[q][n]));
      sq += std::pow(rir[q][n] - ref[q][n], 2);
      ++count;
    }
  }
  EXPECT_LE(std::sqrt(sq / count), 1e-6 * peak);
}

TEST(RenderMicRirs, ColocatedImageThrows) {
  ImageSourceSet set;
  set.images.push_back({Vec3(0.0905, 0.0, 0.0), 1.0, 0});
  ArrayGeometry one{{Vec3(0.09, 0.0, 0.0)}};
  EXPECT_THROW(render_mic_rirs(set, one, Vec3::Zero(), 24000.0), Error);
}

TEST(RenderAmbiRirs, OmniEqualsCenterMicrophone) {
  RoomSpec room;
  room.dimensions = {6.0, 4.0, 3.0};
  room.max_image_order = 4;
  const Vec3 center(2.5, 1.7, 1.4);
  const ImageSourceSet images = image_sources(room, {4.4, 3.0, 2.2}, center);
  const ChannelBuffers ambi =
      render_ambi_rirs(images, center, SHConfig{1}, 24000.0);
  const ChannelBuffers omni = render_mic_rirs(
      images, ArrayGeometry{{Vec3::Zero()}}, center, 24000.0, ambi[0].size());
  for (std::size_t n = 0; n < ambi[0].size(); ++n) {
    EXPECT_NEAR(ambi[0][n], omni[0][n], 1e-9);
  }
}

TEST(RenderAmbiRirs, MirroredPairCancelsYDipole) {
  ImageSourceSet set;
  set.images.push_back({Vec3(1.5, 0.8, 0.3), 0.6, 1});
  set.images.push_back({Vec3(1.5, -0.8, 0.3), 0.6, 1});
  const ChannelBuffers ambi =
      render_ambi_rirs(set, Vec3::Zero(), SHConfig{1}, 24000.0);
  for (double v : ambi[1]) EXPECT_NEAR(v, 0.0, 1e-9);
  double x_energy = 0.0;
  for (double v : ambi[3]) x_energy += v * v;
  EXPECT_GT(x_energy, 0.0);
}

TEST(RenderAmbiRirs, SingleImageScalesBySphericalHarmonics) {
  ImageSourceSet set;
  const Direction dir{0.6, -0.3};
  set.images.push_back({3.0 * dir.unit_vector(), 1.0, 0});
  const SHConfig config{2};
  const ChannelBuffers ambi = render_ambi_rirs(set, Vec3::Zero(), config, 24000.0);
  const SHVector y = eval_real_sh(dir, config);
  for (std::size_t k = 1; k < y.size(); ++k) {
    for (std::size_t n = 0; n < ambi[k].size(); ++n) {
      EXPECT_NEAR(ambi[k][n], y[k] * ambi[0][n], 1e-12);
    }
  }
}

TEST(SampleSceneSpec, ThousandSeedsSatisfyConstraints) {
  const SceneRanges ranges;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const SceneSpec spec = sample_scene_spec(seed, ranges);
    const auto v = spec.violation(ranges);
    ASSERT_FALSE(v.has_value()) << "seed " << seed << ": " << *v;
    EXPECT_GE(spec.room.absorption, ranges.min_absorption);
    EXPECT_LE(spec.room.absorption, ranges.max_absorption);
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(spec.room.dimensions[a], ranges.min_dimensions[a]);
      EXPECT_LE(spec.room.dimensions[a], ranges.max_dimensions[a]);
    }
  }
}

TEST(SampleSceneSpec, Deterministic) {
  const SceneSpec a = sample_scene_spec(42), b = sample_scene_spec(42);
  EXPECT_EQ(a.room.dimensions, b.room.dimensions);
  EXPECT_EQ(a.room.absorption, b.room.absorption);
  EXPECT_EQ(a.array_position, b.array_position);
  ASSERT_EQ(a.source_positions.size(), b.source_positions.size());
  for (std::size_t i = 0; i < a.source_positions.size(); ++i) {
    EXPECT_EQ(a.source_positions[i], b.source_positions[i]);
  }
  EXPECT_NE(sample_scene_spec(43).room.dimensions, a.room.dimensions);
}

TEST(SampleSceneSpec, ImpossibleRangesNameTheConstraint) {
  SceneRanges ranges;
  ranges.max_dimensions = {3.0, 3.0, 3.0};
  ranges.min_source_distance = 50.0;
  ranges.max_attempts = 20;
  try {
    sample_scene_spec(1, ranges);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("source-array distance"),
              std::string::npos);
  }
}

TEST(ArrayGeometry, TetrahedronIsCenteredOnSphere) {
  const ArrayGeometry g = ArrayGeometry::tetrahedron();
  ASSERT_EQ(g.size(), 4u);
  EXPECT_NO_THROW(g.validate());
  for (const auto& p : g.positions) EXPECT_NEAR(p.norm(), 0.09, 1e-15);
  EXPECT_NEAR(g.positions[0].normalized().dot(Vec3(1, 1, 1).normalized()), 1.0,
              1e-15);
}

TEST(ArrayGeometry, IrregularCoordinates) {
  const ArrayGeometry g = ArrayGeometry::irregular();
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g.positions[0], Vec3(0.08, 0.0, 0.03));
  EXPECT_EQ(g.positions[1], Vec3(0.08, 0.0, -0.03));
  EXPECT_EQ(g.positions[2], Vec3(-0.08, 0.005, 0.005));
  EXPECT_EQ(g.positions[3], Vec3(-0.08, -0.005, -0.005));
  EXPECT_NO_THROW(g.validate());
}

TEST(ArrayGeometry, ValidateRejectsBadGeometry) {
  EXPECT_THROW(ArrayGeometry{}.validate(), Error);
  EXPECT_THROW((ArrayGeometry{{Vec3(0.1, 0, 0), Vec3(0.1, 0, 0)}}.validate(
                   Vec3(0.1, 0, 0))),
               Error);
  EXPECT_THROW((ArrayGeometry{{Vec3(0.1, 0, 0)}}.validate()), Error);
}

SceneSpec anechoic_spec(const Vec3& source) {
  SceneSpec spec;
  spec.room.dimensions = {12.0, 10.0, 6.0};
  spec.room.absorption = 1.0;
  spec.room.max_image_order = 3;
  spec.array_position = {3.0, 5.0, 3.0};
  spec.source_positions = {source};
  return spec;
}

TEST(SynthScene, AnechoicFrontalSourceReference) {
  const SceneSpec spec = anechoic_spec({10.0, 5.0, 3.0});
  SceneRenderConfig config;
  const MonoSignal src = synthetic_source(5, config.scene_samples());
  const SceneAudio audio = synth_scene(spec, {src}, config);
  const double r = 7.0;
  const double delay = r * config.sample_rate / kSpeedOfSound;
  const std::vector<double> gains{1.0, 0.0, 0.0, std::sqrt(3.0)};
  for (std::size_t n = 0; n < audio.reference[0].size(); n += 7) {
    double expected = 0.0;
    const auto lo = static_cast<long>(std::ceil(n - delay - 40.0));
    for (long m = std::max(0L, lo); m <= static_cast<long>(n - delay + 40.0);
         ++m) {
      expected += src.samples[m] * oracle_tap(n - m - delay);
    }
    expected /= r;
    for (std::size_t k = 0; k < 4; ++k) {
      ASSERT_NEAR(audio.reference[k][n], gains[k] * expected, 1e-6)
          << "channel " << k << " sample " << n;
    }
  }
}

TEST(SynthScene, SignalLinearity) {
  SceneSpec spec = anechoic_spec({9.0, 2.0, 4.0});
  spec.room.absorption = 0.4;
  SceneRenderConfig config;
  config.scene_seconds = 0.25;
  const std::size_t n = config.scene_samples();
  const MonoSignal a = synthetic_source(1, n), b = synthetic_source(2, n);
  MonoSignal mix{std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    mix.samples[i] = 2.0 * a.samples[i] + b.samples[i];
  }
  const SceneAudio sa = synth_scene(spec, {a}, config);
  const SceneAudio sb = synth_scene(spec, {b}, config);
  const SceneAudio sm = synth_scene(spec, {mix}, config);
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_NEAR(sm.mics[q][i], 2.0 * sa.mics[q][i] + sb.mics[q][i], 1e-9);
      ASSERT_NEAR(sm.reference[q][i],
                  2.0 * sa.reference[q][i] + sb.reference[q][i], 1e-9);
    }
  }
}

TEST(SynthScene, ImpulseSourceReproducesRirs) {
  SceneSpec spec = anechoic_spec({9.0, 2.0, 4.0});
  spec.room.absorption = 0.5;
  SceneRenderConfig config;
  config.scene_seconds = 0.5;
  MonoSignal impulse{std::vector<double>(config.scene_samples(), 0.0)};
  impulse.samples[0] = 1.0;
  const SceneAudio audio = synth_scene(spec, {impulse}, config);
  const RIRSet rirs = render_rirs(spec, spec.source_positions[0], config);
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t i = 0; i < audio.mics[q].size(); ++i) {
      const double expected = i < rirs.mic_rirs[q].size() ? rirs.mic_rirs[q][i] : 0.0;
      ASSERT_NEAR(audio.mics[q][i], expected, 1e-12);
    }
  }
}

TEST(SynthScene, RejectsMismatchedInputs) {
  const SceneSpec spec = anechoic_spec({9.0, 2.0, 4.0});
  SceneRenderConfig config;
  const std::size_t n = config.scene_samples();
  EXPECT_THROW(synth_scene(spec, {}, config), Error);
  EXPECT_THROW(synth_scene(spec, {synthetic_source(1, n / 2)}, config), Error);
  MonoSignal wrong_rate = synthetic_source(1, n, 48000.0);
  EXPECT_THROW(synth_scene(spec, {wrong_rate}, config), Error);
}

TEST(SyntheticSource, DeterministicAndBounded) {
  const MonoSignal a = synthetic_source(9, 48000);
  const MonoSignal b = synthetic_source(9, 48000);
  EXPECT_EQ(a.samples, b.samples);
  double peak = 0.0;
  for (double v : a.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.5, 1e-12);
  EXPECT_NE(synthetic_source(10, 48000).samples, a.samples);
}

}  // namespace
}  // namespace foaenc
