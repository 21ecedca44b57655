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

// Per-frequency error metrics between a reference and an estimated STFT
// block, and the frequency-weighted composite training loss.

#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "foaenc/common.hpp"
#include "foaenc/tfcore.hpp"

namespace foaenc {

namespace detail {

inline void require_same_shape(const STFTTensor& ref, const STFTTensor& est,
                               const char* what) {
  if (!ref.same_shape(est)) {
    throw Error(std::string(what) + ": shape mismatch " + ref.shape_string() +
                " vs " + est.shape_string());
  }
}

}  // namespace detail

/// MAE(f) = 1/(T C) sum_t sum_c |y - y_hat|.
inline std::vector<double> mae(const STFTTensor& ref, const STFTTensor& est) {
  detail::require_same_shape(ref, est, "mae");
  std::vector<double> out(ref.bins(), 0.0);
  const double norm = 1.0 / static_cast<double>(ref.frames() * ref.channels());
  for (std::size_t t = 0; t < ref.frames(); ++t) {
    for (std::size_t f = 0; f < ref.bins(); ++f) {
      double acc = 0.0;
      for (std::size_t c = 0; c < ref.channels(); ++c) {
        acc += std::abs(ref(t, f, c) - est(t, f, c));
      }
      out[f] += acc * norm;
    }
  }
  return out;
}

/// E(f) = 1/T sum_t | sum_c |y|^2 - sum_c |y_hat|^2 |.
inline std::vector<double> energy_error(const STFTTensor& ref,
                                        const STFTTensor& est) {
  detail::require_same_shape(ref, est, "energy_error");
  std::vector<double> out(ref.bins(), 0.0);
  const double norm = 1.0 / static_cast<double>(ref.frames());
  for (std::size_t t = 0; t < ref.frames(); ++t) {
    for (std::size_t f = 0; f < ref.bins(); ++f) {
      double er = 0.0, ee = 0.0;
      for (std::size_t c = 0; c < ref.channels(); ++c) {
        er += std::norm(ref(t, f, c));
        ee += std::norm(est(t, f, c));
      }
      out[f] += std::abs(er - ee) * norm;
    }
  }
  return out;
}

struct CoherenceResult {
  std::vector<double> values;  // C(f), channel-averaged
  bool zero_channel_guarded = false;
};

/// Magnitude-squared coherence over time, averaged over channels:
/// 1/C sum_c |sum_t y* y_hat|^2 / (sum_t |y|^2 sum_t |y_hat|^2).
/// A channel that is all-zero in either input contributes 0 and sets the
/// guard flag.
inline CoherenceResult coherence_detailed(const STFTTensor& ref,
                                          const STFTTensor& est) {
  detail::require_same_shape(ref, est, "coherence");
  CoherenceResult result{std::vector<double>(ref.bins(), 0.0), false};
  const std::size_t channels = ref.channels();
  std::vector<cdouble> cross(channels);
  std::vector<double> pr(channels), pe(channels);
  for (std::size_t f = 0; f < ref.bins(); ++f) {
    std::fill(cross.begin(), cross.end(), cdouble{});
    std::fill(pr.begin(), pr.end(), 0.0);
    std::fill(pe.begin(), pe.end(), 0.0);
    for (std::size_t t = 0; t < ref.frames(); ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        const cdouble y = ref(t, f, c), yh = est(t, f, c);
        cross[c] += std::conj(y) * yh;
        pr[c] += std::norm(y);
        pe[c] += std::norm(yh);
      }
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const double denom = pr[c] * pe[c];
      if (denom > 0.0) {
        acc += std::min(1.0, std::norm(cross[c]) / denom);
      } else {
        result.zero_channel_guarded = true;
      }
    }
    result.values[f] = acc / static_cast<double>(channels);
  }
  return result;
}

inline std::vector<double> coherence(const STFTTensor& ref,
                                     const STFTTensor& est) {
  return coherence_detailed(ref, est).values;
}

struct SpectrumErrorResult {
  std::vector<double> mean;                    // S(f), all channels
  std::vector<std::vector<double>> per_channel;  // [f][c]
  std::size_t excluded_cells = 0;  // cells with a zero magnitude
};

/// S(f) = 1/(T C) sum_c sum_t |20 log10(|y| / |y_hat|)|, skipping cells where
/// either magnitude is zero (averages run over the remaining cells).
inline SpectrumErrorResult mag_spectrum_error(const STFTTensor& ref,
                                              const STFTTensor& est) {
  detail::require_same_shape(ref, est, "mag_spectrum_error");
  const std::size_t channels = ref.channels();
  SpectrumErrorResult result;
  result.mean.assign(ref.bins(), 0.0);
  result.per_channel.assign(ref.bins(), std::vector<double>(channels, 0.0));
  std::vector<std::size_t> counts(channels);
  for (std::size_t f = 0; f < ref.bins(); ++f) {
    std::fill(counts.begin(), counts.end(), 0);
    auto& row = result.per_channel[f];
    for (std::size_t t = 0; t < ref.frames(); ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double a = std::abs(ref(t, f, c));
        const double b = std::abs(est(t, f, c));
        if (a == 0.0 || b == 0.0) {
          ++result.excluded_cells;
          continue;
        }
        row[c] += std::abs(20.0 * std::log10(a / b));
        ++counts[c];
      }
    }
    double total = 0.0;
    std::size_t total_count = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      total += row[c];
      total_count += counts[c];
      row[c] = counts[c] ? row[c] / static_cast<double>(counts[c]) : 0.0;
    }
    result.mean[f] = total_count ? total / static_cast<double>(total_count)
                                 : 0.0;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Composite loss

/// Piecewise-linear function of frequency given by (hz, value) breakpoints;
/// constant beyond the first and last breakpoint.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<std::pair<double, double>> points)
      : points_(std::move(points)) {
    for (std::size_t i = 1; i < points_.size(); ++i) {
      if (points_[i].first < points_[i - 1].first) {
        throw Error("weight breakpoints must be sorted by frequency");
      }
    }
    for (const auto& [hz, w] : points_) {
      if (!(w >= 0.0) || !std::isfinite(hz)) {
        throw Error("weights must be finite and non-negative");
      }
    }
  }

  double operator()(double hz) const {
    if (points_.empty()) return 0.0;
    if (hz <= points_.front().first) return points_.front().second;
    for (std::size_t i = 1; i < points_.size(); ++i) {
      const auto& [x1, y1] = points_[i];
      if (hz <= x1) {
        const auto& [x0, y0] = points_[i - 1];
        if (x1 == x0) return y1;
        return y0 + (y1 - y0) * (hz - x0) / (x1 - x0);
      }
    }
    return points_.back().second;
  }

  const std::vector<std::pair<double, double>>& points() const {
    return points_;
  }

 private:
  std::vector<std::pair<double, double>> points_;
};

enum class CoherenceTerm {
  kOneMinus,  // gamma * (1 - C): rewards coherence
  kLiteral,   // gamma * C, as the weighted sum is literally written
};

struct LossWeights {
  PiecewiseLinear alpha;
  PiecewiseLinear beta;
  PiecewiseLinear gamma;
  CoherenceTerm coherence_term = CoherenceTerm::kOneMinus;

  /// alpha: 1 up to 1 kHz, ramp to 0 at 2 kHz. beta: 0 up to 1 kHz, ramp to
  /// 0.01 at 2 kHz. gamma: 5 up to 4 kHz, ramp to 0 at 5 kHz.
  static LossWeights defaults() {
    return {PiecewiseLinear({{0, 1.0}, {1000, 1.0}, {2000, 0.0}, {12000, 0.0}}),
            PiecewiseLinear(
                {{0, 0.0}, {1000, 0.0}, {2000, 0.01}, {12000, 0.01}}),
            PiecewiseLinear({{0, 5.0}, {4000, 5.0}, {5000, 0.0}, {12000, 0.0}}),
            CoherenceTerm::kOneMinus};
  }

  static LossWeights zero() {
    return {PiecewiseLinear({{0, 0.0}}), PiecewiseLinear({{0, 0.0}}),
            PiecewiseLinear({{0, 0.0}}), CoherenceTerm::kOneMinus};
  }
};

inline nlohmann::json to_json(const LossWeights& w) {
  auto curve = [](const PiecewiseLinear& p) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [hz, v] : p.points()) arr.push_back({hz, v});
    return arr;
  };
  nlohmann::json j{{"alpha", curve(w.alpha)},
                   {"beta", curve(w.beta)},
                   {"gamma", curve(w.gamma)}};
  if (w.coherence_term == CoherenceTerm::kLiteral) {
    j["coherence_term"] = "literal";
  }
  return j;
}

inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
  auto curve = [&](const char* key) {
    if (!j.contains(key)) {
      throw Error(std::string("loss weights: missing '") + key + "'");
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : j.at(key)) {
      if (!p.is_array() || p.size() != 2) {
        throw Error(std::string("loss weights: '") + key +
                    "' entries must be [hz, weight] pairs");
      }
      pts.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return PiecewiseLinear(std::move(pts));
  };
  LossWeights w{curve("alpha"), curve("beta"), curve("gamma"),
                CoherenceTerm::kOneMinus};
  if (j.value("coherence_term", std::string("one_minus")) == "literal") {
    w.coherence_term = CoherenceTerm::kLiteral;
  }
  return w;
}

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_bin;  // alpha MAE + beta E + gamma (1 - C)
};

/// L = 1/F sum_f [alpha MAE + beta E + gamma (1 - C)], weights evaluated at
/// bin center frequencies.
inline LossBreakdown composite_loss(const std::vector<double>& freqs,
                                    const std::vector<double>& mae_f,
                                    const std::vector<double>& energy_f,
                                    const std::vector<double>& coherence_f,
                                    const LossWeights& weights) {
  const std::size_t bins = freqs.size();
  if (mae_f.size() != bins || energy_f.size() != bins ||
      coherence_f.size() != bins) {
    throw Error("composite_loss: component lengths differ");
  }
  LossBreakdown out;
  out.per_bin.resize(bins);
  for (std::size_t f = 0; f < bins; ++f) {
    const double hz = freqs[f];
    const double coh_term = weights.coherence_term == CoherenceTerm::kOneMinus
                                ? 1.0 - coherence_f[f]
                                : coherence_f[f];
    out.per_bin[f] = weights.alpha(hz) * mae_f[f] +
                     weights.beta(hz) * energy_f[f] +
                     weights.gamma(hz) * coh_term;
    out.total += out.per_bin[f];
  }
  if (bins) out.total /= static_cast<double>(bins);
  return out;
}

inline LossBreakdown composite_loss(const STFTTensor& ref,
                                    const STFTTensor& est,
                                    const LossWeights& weights) {
  std::vector<double> freqs;
  for (std::size_t f = 0; f < ref.bins(); ++f) {
    freqs.push_back(ref.config().bin_frequency(f));
  }
  return composite_loss(freqs, mae(ref, est), energy_error(ref, est),
                        coherence(ref, est), weights);
}

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
  std::vector<double> freq_hz;
  std::vector<double> mae;
  std::vector<double> energy_err;
  std::vector<double> coherence;
  std::vector<double> s_mean;
  std::vector<std::vector<double>> s_channel;  // [f][c]
  double composite = 0.0;
  std::size_t excluded_cells = 0;
  bool coherence_guarded = false;

  std::size_t bins() const { return freq_hz.size(); }
  std::size_t channels() const {
    return s_channel.empty() ? 0 : s_channel.front().size();
  }
};

inline MetricsReport evaluate_metrics(const STFTTensor& ref,
                                      const STFTTensor& est,
                                      const LossWeights& weights =
                                          LossWeights::defaults()) {
  MetricsReport r;
  for (std::size_t f = 0; f < ref.bins(); ++f) {
    r.freq_hz.push_back(ref.config().bin_frequency(f));
  }
  r.mae = mae(ref, est);
  r.energy_err = energy_error(ref, est);
  const CoherenceResult coh = coherence_detailed(ref, est);
  r.coherence = coh.values;
  r.coherence_guarded = coh.zero_channel_guarded;
  SpectrumErrorResult s = mag_spectrum_error(ref, est);
  r.s_mean = std::move(s.mean);
  r.s_channel = std::move(s.per_channel);
  r.excluded_cells = s.excluded_cells;
  r.composite =
      composite_loss(r.freq_hz, r.mae, r.energy_err, r.coherence, weights)
          .total;
  return r;
}

/// Header for a report with `channels` per-channel S columns.
inline std::string report_header(std::size_t channels) {
  std::string h = "freq_hz,mae,energy_err,coherence,s_mean";
  for (std::size_t c = 0; c < channels; ++c) h += ",s_ch" + std::to_string(c);
  return h;
}

inline void emit_report(const MetricsReport& report, const std::string& path,
                        std::size_t channels_if_empty = 4) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write report " + path);
  const std::size_t channels =
      report.bins() ? report.channels() : channels_if_empty;
  os << report_header(channels) << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (std::size_t f = 0; f < report.bins(); ++f) {
    put(report.freq_hz[f]);
    for (double v : {report.mae[f], report.energy_err[f], report.coherence[f],
                     report.s_mean[f]}) {
      os << ',';
      put(v);
    }
    for (double v : report.s_channel[f]) {
      os << ',';
      put(v);
    }
    os << '\n';
  }
  if (!os) throw Error("write failed: " + path);
}

inline MetricsReport read_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open report " + path);
  std::string line;
  if (!std::getline(is, line)) throw Error("empty report " + path);
  std::size_t columns = 1;
  for (char ch : line) columns += ch == ',';
  if (columns < 5) throw Error("malformed report header in " + path);
  MetricsReport r;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != columns) {
      throw Error("malformed report row in " + path);
    }
    r.freq_hz.push_back(values[0]);
    r.mae.push_back(values[1]);
    r.energy_err.push_back(values[2]);
    r.coherence.push_back(values[3]);
    r.s_mean.push_back(values[4]);
    r.s_channel.emplace_back(values.begin() + 5, values.end());
  }
  return r;
}

/// Element-wise mean of reports with identical frequency axes.
inline MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) return {};
  MetricsReport avg = reports.front();
  const double n = static_cast<double>(reports.size());
  auto accumulate = [&](auto member) {
    auto& dst = avg.*member;
    for (auto& v : dst) v = 0.0;
    for (const auto& r : reports) {
      const auto& src = r.*member;
      if (src.size() != dst.size()) {
        throw Error("average_reports: frequency axes differ");
      }
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] / n;
    }
  };
  accumulate(&MetricsReport::mae);
  accumulate(&MetricsReport::energy_err);
  accumulate(&MetricsReport::coherence);
  accumulate(&MetricsReport::s_mean);
  for (std::size_t f = 0; f < avg.s_channel.size(); ++f) {
    for (std::size_t c = 0; c < avg.s_channel[f].size(); ++c) {
      double acc = 0.0;
      for (const auto& r : reports) acc += r.s_channel.at(f).at(c) / n;
      avg.s_channel[f][c] = acc;
    }
  }
  avg.composite = 0.0;
  avg.excluded_cells = 0;
  avg.coherence_guarded = false;
  for (const auto& r : reports) {
    avg.composite += r.composite / n;
    avg.excluded_cells += r.excluded_cells;
    avg.coherence_guarded = avg.coherence_guarded || r.coherence_guarded;
  }
  return avg;
}

}  // namespace foaenc
