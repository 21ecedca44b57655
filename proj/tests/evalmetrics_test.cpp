#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "foaenc/evalmetrics.hpp"

namespace foaenc {
namespace {

STFTTensor random_tensor(std::size_t t, std::size_t f, std::size_t c,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  STFTTensor x(t, f, c);
  for (auto& v : x.data()) v = {n(rng), n(rng)};
  return x;
}

// Naive oracles written directly from the metric definitions.
double naive_mae(const STFTTensor& y, const STFTTensor& e, std::size_t f) {
  double acc = 0.0;
  for (std::size_t c = 0; c < y.channels(); ++c) {
    for (std::size_t t = 0; t < y.frames(); ++t) {
      const double dr = y(t, f, c).real() - e(t, f, c).real();
      const double di = y(t, f, c).imag() - e(t, f, c).imag();
      acc += std::sqrt(dr * dr + di * di);
    }
  }
  return acc / (y.frames() * y.channels());
}

double naive_energy(const STFTTensor& y, const STFTTensor& e, std::size_t f) {
  double acc = 0.0;
  for (std::size_t t = 0; t < y.frames(); ++t) {
    double a = 0.0, b = 0.0;
    for (std::size_t c = 0; c < y.channels(); ++c) {
      a += std::pow(std::abs(y(t, f, c)), 2);
      b += std::pow(std::abs(e(t, f, c)), 2);
    }
    acc += std::abs(a - b);
  }
  return acc / y.frames();
}

double naive_coherence(const STFTTensor& y, const STFTTensor& e, std::size_t f) {
  double acc = 0.0;
  for (std::size_t c = 0; c < y.channels(); ++c) {
    double re = 0.0, im = 0.0, py = 0.0, pe = 0.0;
    for (std::size_t t = 0; t < y.frames(); ++t) {
      const cdouble a = y(t, f, c), b = e(t, f, c);
      re += a.real() * b.real() + a.imag() * b.imag();
      im += a.real() * b.imag() - a.imag() * b.real();
      py += a.real() * a.real() + a.imag() * a.imag();
      pe += b.real() * b.real() + b.imag() * b.imag();
    }
    acc += (re * re + im * im) / (py * pe);
  }
  return acc / y.channels();
}

double naive_s(const STFTTensor& y, const STFTTensor& e, std::size_t f) {
  double acc = 0.0;
  for (std::size_t c = 0; c < y.channels(); ++c) {
    for (std::size_t t = 0; t < y.frames(); ++t) {
      acc += std::abs(20.0 * std::log10(std::abs(y(t, f, c))) -
                      20.0 * std::log10(std::abs(e(t, f, c))));
    }
  }
  return acc / (y.frames() * y.channels());
}

TEST(Metrics, MatchNaiveOracles) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const STFTTensor y = random_tensor(8, 16, 4, rng);
    const STFTTensor e = random_tensor(8, 16, 4, rng);
    const auto m = mae(y, e);
    const auto en = energy_error(y, e);
    const auto co = coherence(y, e);
    const auto s = mag_spectrum_error(y, e);
    for (std::size_t f = 0; f < 16; ++f) {
      EXPECT_NEAR(m[f], naive_mae(y, e, f), 1e-10);
      EXPECT_NEAR(en[f], naive_energy(y, e, f), 1e-10);
      EXPECT_NEAR(co[f], naive_coherence(y, e, f), 1e-10);
      EXPECT_NEAR(s.mean[f], naive_s(y, e, f), 1e-10);
    }
  }
}

TEST(Metrics, IdenticalInputs) {
  std::mt19937_64 rng(1);
  const STFTTensor y = random_tensor(8, 16, 4, rng);
  for (std::size_t f = 0; f < 16; ++f) {
    EXPECT_EQ(mae(y, y)[f], 0.0);
    EXPECT_EQ(energy_error(y, y)[f], 0.0);
    EXPECT_NEAR(coherence(y, y)[f], 1.0, 1e-12);
    EXPECT_EQ(mag_spectrum_error(y, y).mean[f], 0.0);
  }
}

TEST(Metrics, DoubledEstimate) {
  std::mt19937_64 rng(2);
  const STFTTensor y = random_tensor(8, 16, 4, rng);
  STFTTensor e = y;
  for (auto& v : e.data()) v *= 2.0;
  const auto s = mag_spectrum_error(y, e);
  const auto c = coherence(y, e);
  for (std::size_t f = 0; f < 16; ++f) {
    EXPECT_NEAR(s.mean[f], 20.0 * std::log10(2.0), 1e-9);
    EXPECT_NEAR(c[f], 1.0, 1e-12);
    for (double v : s.per_channel[f]) EXPECT_NEAR(v, 6.0206, 1e-4);
  }
}

TEST(Metrics, CoherenceIgnoresPerBinComplexGain) {
  std::mt19937_64 rng(3);
  const STFTTensor y = random_tensor(8, 16, 4, rng);
  STFTTensor e = y;
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t f = 0; f < 16; ++f) {
      for (std::size_t c = 0; c < 4; ++c) {
        e(t, f, c) *= std::polar(0.3 + f * 0.1, 0.7 * c - 0.2 * f);
      }
    }
  }
  for (double v : coherence(y, e)) EXPECT_NEAR(v, 1.0, 1e-12);
  // S and MAE are symmetric in their arguments; E is too.
  const STFTTensor z = random_tensor(8, 16, 4, rng);
  for (std::size_t f = 0; f < 16; ++f) {
    EXPECT_NEAR(mae(y, z)[f], mae(z, y)[f], 1e-12);
    EXPECT_NEAR(energy_error(y, z)[f], energy_error(z, y)[f], 1e-12);
    EXPECT_NEAR(mag_spectrum_error(y, z).mean[f],
                mag_spectrum_error(z, y).mean[f], 1e-12);
  }
}

TEST(Metrics, ZeroChannelIsGuarded) {
  std::mt19937_64 rng(4);
  const STFTTensor y = random_tensor(8, 4, 2, rng);
  STFTTensor e = y;
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t f = 0; f < 4; ++f) e(t, f, 1) = 0.0;
  }
  const CoherenceResult c = coherence_detailed(y, e);
  EXPECT_TRUE(c.zero_channel_guarded);
  for (double v : c.values) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 0.5, 1e-12);
  }
  const SpectrumErrorResult s = mag_spectrum_error(y, e);
  EXPECT_EQ(s.excluded_cells, 8u * 4u);
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(s.mean[f], 0.0);
    EXPECT_EQ(s.per_channel[f][1], 0.0);
  }
}

TEST(Metrics, ShapeMismatchThrows) {
  STFTTensor a(2, 3, 4), b(2, 3, 2);
  EXPECT_THROW(mae(a, b), Error);
  EXPECT_THROW(energy_error(a, b), Error);
  EXPECT_THROW(coherence(a, b), Error);
  EXPECT_THROW(mag_spectrum_error(a, b), Error);
}

TEST(PiecewiseLinear, InterpolatesAndClamps) {
  const LossWeights w = LossWeights::defaults();
  EXPECT_EQ(w.alpha(500.0), 1.0);
  EXPECT_NEAR(w.alpha(1500.0), 0.5, 1e-15);
  EXPECT_EQ(w.alpha(3000.0), 0.0);
  EXPECT_NEAR(w.beta(1500.0), 0.005, 1e-15);
  EXPECT_EQ(w.beta(20000.0), 0.01);
  EXPECT_EQ(w.gamma(4000.0), 5.0);
  EXPECT_NEAR(w.gamma(4500.0), 2.5, 1e-12);
  EXPECT_EQ(w.gamma(6000.0), 0.0);
  EXPECT_THROW(PiecewiseLinear({{100, 1}, {50, 1}}), Error);
  EXPECT_THROW(PiecewiseLinear({{100, -1}}), Error);
}

TEST(CompositeLoss, OneMinusCoherenceDefault) {
  const std::vector<double> freqs{0.0, 1500.0, 4500.0, 8000.0};
  const std::vector<double> m{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> e{10.0, 20.0, 30.0, 40.0};
  const std::vector<double> c{0.9, 0.8, 0.5, 0.1};
  const LossWeights w = LossWeights::defaults();
  const LossBreakdown l = composite_loss(freqs, m, e, c, w);
  const std::vector<double> expected{1.0 + 0.0 + 5.0 * 0.1,
                                     0.5 * 2.0 + 0.005 * 20.0 + 5.0 * 0.2,
                                     0.01 * 30.0 + 2.5 * 0.5,
                                     0.01 * 40.0};
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_NEAR(l.per_bin[f], expected[f], 1e-12);
  }
  EXPECT_NEAR(l.total,
              (expected[0] + expected[1] + expected[2] + expected[3]) / 4.0,
              1e-12);

  LossWeights literal = w;
  literal.coherence_term = CoherenceTerm::kLiteral;
  EXPECT_NEAR(composite_loss(freqs, m, e, c, literal).per_bin[0],
              1.0 + 5.0 * 0.9, 1e-12);
}

TEST(CompositeLoss, PerfectEstimateHasZeroLoss) {
  std::mt19937_64 rng(6);
  STFTTensor y = random_tensor(8, 513, 4, rng);
  EXPECT_NEAR(composite_loss(y, y, LossWeights::defaults()).total, 0.0, 1e-10);
  EXPECT_EQ(composite_loss(y, random_tensor(8, 513, 4, rng),
                           LossWeights::zero())
                .total,
            0.0);
}

TEST(LossWeightsJson, RoundTrip) {
  LossWeights w = LossWeights::defaults();
  w.coherence_term = CoherenceTerm::kLiteral;
  const LossWeights back = loss_weights_from_json(to_json(w));
  EXPECT_EQ(back.alpha.points(), w.alpha.points());
  EXPECT_EQ(back.beta.points(), w.beta.points());
  EXPECT_EQ(back.gamma.points(), w.gamma.points());
  EXPECT_EQ(back.coherence_term, CoherenceTerm::kLiteral);
  EXPECT_THROW(loss_weights_from_json({{"alpha", {{0, 1}}}}), Error);
  EXPECT_THROW(loss_weights_from_json(
                   {{"alpha", {{0, 1, 2}}}, {"beta", {}}, {"gamma", {}}}),
               Error);
}

class ReportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("foaenc_metrics_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(ReportTest, CsvHas513RowsAndRoundTrips) {
  std::mt19937_64 rng(7);
  const STFTTensor y = random_tensor(6, 513, 4, rng);
  const STFTTensor e = random_tensor(6, 513, 4, rng);
  const MetricsReport r = evaluate_metrics(y, e);
  const std::string path = (dir_ / "r.csv").string();
  emit_report(r, path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "freq_hz,mae,energy_err,coherence,s_mean,s_ch0,s_ch1,"
                    "s_ch2,s_ch3");
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  EXPECT_EQ(rows, 513u);

  const MetricsReport back = read_report(path);
  EXPECT_EQ(back.freq_hz, r.freq_hz);
  EXPECT_EQ(back.mae, r.mae);
  EXPECT_EQ(back.coherence, r.coherence);
  EXPECT_EQ(back.s_channel, r.s_channel);
  EXPECT_EQ(back.freq_hz[512], 12000.0);
}

TEST_F(ReportTest, EmptyReportHasHeaderOnly) {
  const std::string path = (dir_ / "empty.csv").string();
  emit_report(MetricsReport{}, path);
  std::ifstream is(path);
  std::string header, extra;
  std::getline(is, header);
  EXPECT_EQ(header, report_header(4));
  EXPECT_FALSE(static_cast<bool>(std::getline(is, extra)));
  EXPECT_EQ(read_report(path).bins(), 0u);
}

TEST(AverageReports, ElementwiseMean) {
  std::mt19937_64 rng(8);
  const STFTTensor y = random_tensor(4, 9, 2, rng);
  const MetricsReport a = evaluate_metrics(y, random_tensor(4, 9, 2, rng));
  const MetricsReport b = evaluate_metrics(y, random_tensor(4, 9, 2, rng));
  const MetricsReport avg = average_reports({a, b});
  for (std::size_t f = 0; f < 9; ++f) {
    EXPECT_NEAR(avg.mae[f], 0.5 * (a.mae[f] + b.mae[f]), 1e-14);
    EXPECT_NEAR(avg.s_channel[f][1],
                0.5 * (a.s_channel[f][1] + b.s_channel[f][1]), 1e-14);
  }
  EXPECT_NEAR(avg.composite, 0.5 * (a.composite + b.composite), 1e-14);
  EXPECT_EQ(average_reports({}).bins(), 0u);
}

}  // namespace
}  // namespace foaenc
