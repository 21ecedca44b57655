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

// Signal-independent encoder design and encoding-matrix application.
//
// The baseline encoder M(f) minimizes the discretized least-squares mismatch
//
//   J(M) = sum_d w_d |M h(f, d) - y_N(d)|^2 + lambda |M|_F^2
//
// over a quadrature grid, with lambda chosen per bin as the smallest value
// keeping every row gain |m_k(f)|_2 under the cap. Above the aliasing
// frequency each output channel is scaled so that its diffuse-field energy
// equals that of the ideal spherical harmonic.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "foaenc/common.hpp"
#include "foaenc/scenegen.hpp"
#include "foaenc/shmath.hpp"
#include "foaenc/tfcore.hpp"

namespace foaenc {

using Eigen::MatrixXcd;

/// Per-bin Q x D transfer functions from the grid directions to the mics.
struct ATFMatrix {
  std::vector<double> freqs;
  std::vector<MatrixXcd> bins;

  std::size_t mics() const { return bins.empty() ? 0 : bins.front().rows(); }
  std::size_t directions() const {
    return bins.empty() ? 0 : bins.front().cols();
  }
};

/// Open array of ideal omnis under plane-wave incidence:
/// h_q(f, d) = exp(+i 2 pi f / c <r_q, u_d>).
inline ATFMatrix array_atfs(const ArrayGeometry& geometry,
                            const SphereGrid& grid,
                            const std::vector<double>& freqs,
                            double speed_of_sound = kSpeedOfSound) {
  if (geometry.positions.empty()) throw Error("array geometry has no mics");
  ATFMatrix atfs;
  atfs.freqs = freqs;
  std::vector<Vec3> units;
  for (const auto& d : grid.directions) units.push_back(d.unit_vector());

  Eigen::MatrixXd proj(geometry.size(), grid.size());
  for (std::size_t q = 0; q < geometry.size(); ++q) {
    for (std::size_t d = 0; d < grid.size(); ++d) {
      proj(q, d) = geometry.positions[q].dot(units[d]);
    }
  }
  for (double f : freqs) {
    const double k = 2.0 * kPi * f / speed_of_sound;
    MatrixXcd h(geometry.size(), grid.size());
    for (Eigen::Index q = 0; q < h.rows(); ++q) {
      for (Eigen::Index d = 0; d < h.cols(); ++d) {
        h(q, d) = std::polar(1.0, k * proj(q, d));
      }
    }
    atfs.bins.push_back(std::move(h));
  }
  return atfs;
}

/// Per-bin (N+1)^2 x Q encoding matrices M(f).
struct EncodingMatrix {
  std::vector<double> freqs;
  double sample_rate = kDefaultSampleRate;
  std::size_t fft_size = 1024;
  std::vector<MatrixXcd> bins;

  std::size_t rows() const { return bins.empty() ? 0 : bins.front().rows(); }
  std::size_t cols() const { return bins.empty() ? 0 : bins.front().cols(); }

  static EncodingMatrix identity(std::size_t size, const STFTConfig& config) {
    EncodingMatrix m;
    m.sample_rate = config.sample_rate;
    m.fft_size = config.fft_size;
    for (std::size_t f = 0; f < config.bins(); ++f) {
      m.freqs.push_back(config.bin_frequency(f));
      m.bins.push_back(MatrixXcd::Identity(size, size));
    }
    return m;
  }
};

/// Encoding matrices varying per frame, T x F x rows x cols.
class TFEncodingMatrix {
 public:
  TFEncodingMatrix() = default;
  TFEncodingMatrix(std::size_t frames, std::size_t bins, std::size_t rows,
                   std::size_t cols)
      : frames_(frames),
        bins_(bins),
        rows_(rows),
        cols_(cols),
        data_(frames * bins * rows * cols) {}

  /// Repeats a static matrix over `frames` frames.
  static TFEncodingMatrix from_static(const EncodingMatrix& m,
                                      std::size_t frames) {
    TFEncodingMatrix out(frames, m.bins.size(), m.rows(), m.cols());
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f < m.bins.size(); ++f) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
          for (std::size_t c = 0; c < m.cols(); ++c) {
            out(t, f, r, c) = m.bins[f](r, c);
          }
        }
      }
    }
    return out;
  }

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  cdouble& operator()(std::size_t t, std::size_t f, std::size_t r,
                      std::size_t c) {
    return data_[((t * bins_ + f) * rows_ + r) * cols_ + c];
  }
  cdouble operator()(std::size_t t, std::size_t f, std::size_t r,
                     std::size_t c) const {
    return data_[((t * bins_ + f) * rows_ + r) * cols_ + c];
  }
  std::vector<cdouble>& data() { return data_; }
  const std::vector<cdouble>& data() const { return data_; }

  double sample_rate = kDefaultSampleRate;
  std::size_t fft_size = 1024;

 private:
  std::size_t frames_ = 0, bins_ = 0, rows_ = 0, cols_ = 0;
  std::vector<cdouble> data_;
};

// ---------------------------------------------------------------------------
// Baseline design

/// Spatial aliasing heuristic N c / (2 pi r_max), r_max measured from the
/// array centroid.
inline double aliasing_frequency(const ArrayGeometry& geometry, int order,
                                 double speed_of_sound = kSpeedOfSound) {
  const double r = geometry.max_radius();
  if (!(r > 0.0)) {
    throw Error("aliasing_frequency: all microphones at the centroid");
  }
  return order * speed_of_sound / (2.0 * kPi * r);
}

inline double row_gain(const MatrixXcd& m, Eigen::Index row) {
  return m.row(row).norm();
}

inline double max_row_gain_db(const MatrixXcd& m) {
  double g = 0.0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) g = std::max(g, row_gain(m, r));
  return amplitude_to_db(g);
}

/// The regularized least-squares problem at one frequency. The normal
/// matrix is diagonalized once so any lambda can be solved cheaply.
class RegularizedLeastSquares {
 public:
  RegularizedLeastSquares(const MatrixXcd& atf, const Eigen::MatrixXd& sh,
                          const std::vector<double>& weights)
      : atf_(atf), sh_(sh.cast<cdouble>()) {
    if (atf.cols() != sh.cols() ||
        static_cast<std::size_t>(atf.cols()) != weights.size()) {
      throw Error("ATF, SH matrix and grid sizes disagree");
    }
    weights_ = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                 weights.size());
    const MatrixXcd hw = atf_ * weights_.cast<cdouble>().asDiagonal();
    const MatrixXcd normal = hw * atf_.adjoint();  // Q x Q, Hermitian
    cross_ = sh_ * weights_.cast<cdouble>().asDiagonal() * atf_.adjoint();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(normal);
    eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
    eigenvectors_ = eig.eigenvectors();
    scale_ = std::max(normal.trace().real() / normal.rows(),
                      std::numeric_limits<double>::min());
  }

  /// Typical magnitude of the normal matrix diagonal; lambda is relative
  /// to this scale.
  double scale() const { return scale_; }

  MatrixXcd solve(double lambda) const {
    Eigen::VectorXcd inv =
        (eigenvalues_.array() + lambda).inverse().cast<cdouble>();
    return cross_ * eigenvectors_ * inv.asDiagonal() *
           eigenvectors_.adjoint();
  }

  double objective(const MatrixXcd& m, double lambda) const {
    const MatrixXcd residual = m * atf_ - sh_;
    double j = 0.0;
    for (Eigen::Index d = 0; d < residual.cols(); ++d) {
      j += weights_[d] * residual.col(d).squaredNorm();
    }
    return j + lambda * m.squaredNorm();
  }

  /// Diffuse-field energy of each output row: sum_d w_d |m_k h_d|^2.
  Eigen::VectorXd diffuse_energy(const MatrixXcd& m) const {
    const MatrixXcd out = m * atf_;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(out.rows());
    for (Eigen::Index d = 0; d < out.cols(); ++d) {
      e += weights_[d] * out.col(d).cwiseAbs2();
    }
    return e;
  }

  Eigen::VectorXd ideal_diffuse_energy() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(sh_.rows());
    for (Eigen::Index d = 0; d < sh_.cols(); ++d) {
      e += weights_[d] * sh_.col(d).cwiseAbs2();
    }
    return e;
  }

 private:
  MatrixXcd atf_;
  MatrixXcd sh_;
  Eigen::VectorXd weights_;
  MatrixXcd cross_;
  Eigen::VectorXd eigenvalues_;
  MatrixXcd eigenvectors_;
  double scale_ = 1.0;
};

struct BaselineOptions {
  double gain_cap_db = 15.0;
  double aliasing_hz = std::numeric_limits<double>::infinity();
  double eq_crossfade_octaves = 1.0 / 3.0;
  bool diffuse_eq = true;
};

struct BaselineDesign {
  EncodingMatrix matrix;
  std::vector<double> lambda;            // per bin
  std::vector<double> max_row_gain_db;   // per bin, after EQ
  std::vector<std::vector<double>> eq;   // per bin, per row
};

inline constexpr double kMinRelativeLambda = 1e-12;

/// Smallest lambda (on a relative grid) whose solution keeps every row gain
/// at or below the cap.
inline double find_regularization(const RegularizedLeastSquares& problem,
                                  double cap_linear) {
  auto gain_ok = [&](double lambda) {
    const MatrixXcd m = problem.solve(lambda);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (row_gain(m, r) > cap_linear) return false;
    }
    return true;
  };
  double lo = kMinRelativeLambda * problem.scale();
  if (gain_ok(lo)) return lo;
  double hi = problem.scale();
  while (!gain_ok(hi)) {
    lo = hi;
    hi *= 10.0;
    if (!std::isfinite(hi)) throw Error("gain cap cannot be met");
  }
  while (hi / lo > 1.0 + 1e-9) {
    const double mid = std::sqrt(lo * hi);
    (gain_ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline BaselineDesign design_baseline(const ATFMatrix& atfs,
                                      const SphereGrid& grid,
                                      const SHConfig& config,
                                      const BaselineOptions& options = {},
                                      double sample_rate = kDefaultSampleRate,
                                      std::size_t fft_size = 1024) {
  if (!(options.gain_cap_db > 0.0)) {
    throw Error("gain cap must be positive, got " +
                std::to_string(options.gain_cap_db) + " dB");
  }
  if (grid.exact_degree < 2 * config.order) {
    throw Error("design grid of degree " + std::to_string(grid.exact_degree) +
                " cannot resolve SH order " + std::to_string(config.order));
  }
  if (atfs.directions() != grid.size()) {
    throw Error("ATFs were not evaluated on the design grid");
  }
  const double cap = db_to_amplitude(options.gain_cap_db);
  const Eigen::MatrixXd sh = sh_matrix(grid, config);

  BaselineDesign design;
  design.matrix.sample_rate = sample_rate;
  design.matrix.fft_size = fft_size;
  design.matrix.freqs = atfs.freqs;
  for (std::size_t b = 0; b < atfs.bins.size(); ++b) {
    const RegularizedLeastSquares problem(atfs.bins[b], sh, grid.weights);
    const double lambda = find_regularization(problem, cap);
    MatrixXcd m = problem.solve(lambda);

    std::vector<double> eq(m.rows(), 1.0);
    const double f = atfs.freqs[b];
    if (options.diffuse_eq && f > options.aliasing_hz) {
      const double fade =
          std::clamp(std::log2(f / options.aliasing_hz) /
                         options.eq_crossfade_octaves,
                     0.0, 1.0);
      const Eigen::VectorXd actual = problem.diffuse_energy(m);
      const Eigen::VectorXd ideal = problem.ideal_diffuse_energy();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (!(actual[r] > 0.0)) continue;
        double g = 1.0 + fade * (std::sqrt(ideal[r] / actual[r]) - 1.0);
        const double gain = row_gain(m, r);
        if (gain * g > cap) g = cap / gain;
        eq[r] = g;
        m.row(r) *= g;
      }
    }
    design.lambda.push_back(lambda);
    design.max_row_gain_db.push_back(max_row_gain_db(m));
    design.eq.push_back(std::move(eq));
    design.matrix.bins.push_back(std::move(m));
  }
  return design;
}

/// Degree of the default design grid (Gauss product, 25 x 49 points).
inline constexpr int kDesignGridDegree = 24;

inline std::vector<double> bin_frequencies(const STFTConfig& config) {
  std::vector<double> freqs;
  for (std::size_t f = 0; f < config.bins(); ++f) {
    freqs.push_back(config.bin_frequency(f));
  }
  return freqs;
}

/// Baseline for an open omni array on the STFT bin frequencies, with the
/// aliasing frequency from the array geometry unless given.
inline BaselineDesign design_baseline_for_array(
    const ArrayGeometry& geometry, const STFTConfig& stft_config = {},
    const SHConfig& sh = {}, BaselineOptions options = {},
    double speed_of_sound = kSpeedOfSound) {
  const SphereGrid grid = sphere_grid(kDesignGridDegree);
  if (options.diffuse_eq && !std::isfinite(options.aliasing_hz)) {
    options.aliasing_hz = aliasing_frequency(geometry, sh.order, speed_of_sound);
  }
  const ATFMatrix atfs =
      array_atfs(geometry, grid, bin_frequencies(stft_config), speed_of_sound);
  return design_baseline(atfs, grid, sh, options, stft_config.sample_rate,
                         stft_config.fft_size);
}

// ---------------------------------------------------------------------------
// Application

inline STFTTensor apply_static(const EncodingMatrix& matrix,
                               const STFTTensor& x) {
  if (matrix.bins.size() != x.bins() || matrix.cols() != x.channels()) {
    throw Error("apply_static: matrix is " + std::to_string(matrix.bins.size()) +
                " bins x " + std::to_string(matrix.rows()) + "x" +
                std::to_string(matrix.cols()) + ", input is " +
                x.shape_string());
  }
  const std::size_t rows = matrix.rows(), cols = matrix.cols();
  STFTTensor out(x.frames(), x.bins(), rows, x.config());
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t f = 0; f < x.bins(); ++f) {
      const MatrixXcd& m = matrix.bins[f];
      for (std::size_t r = 0; r < rows; ++r) {
        cdouble acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += m(r, c) * x(t, f, c);
        out(t, f, r) = acc;
      }
    }
  }
  return out;
}

inline STFTTensor apply_tf(const TFEncodingMatrix& matrix,
                           const STFTTensor& x) {
  if (matrix.frames() != x.frames() || matrix.bins() != x.bins() ||
      matrix.cols() != x.channels()) {
    throw Error("apply_tf: matrix is " + std::to_string(matrix.frames()) +
                "x" + std::to_string(matrix.bins()) + "x" +
                std::to_string(matrix.rows()) + "x" +
                std::to_string(matrix.cols()) + ", input is " +
                x.shape_string());
  }
  const std::size_t rows = matrix.rows(), cols = matrix.cols();
  STFTTensor out(x.frames(), x.bins(), rows, x.config());
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t f = 0; f < x.bins(); ++f) {
      for (std::size_t r = 0; r < rows; ++r) {
        cdouble acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          acc += matrix(t, f, r, c) * x(t, f, c);
        }
        out(t, f, r) = acc;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AMBENC1 / AMBTFE1 files

inline constexpr char kEncodingMagic[8] = {'A', 'M', 'B', 'E',
                                           'N', 'C', '1', '\0'};
inline constexpr char kTFEncodingMagic[8] = {'A', 'M', 'B', 'T',
                                             'F', 'E', '1', '\0'};

inline void write_encoding_matrix(const std::string& path,
                                  const EncodingMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  detail::put_magic(os, kEncodingMagic);
  detail::put_le(os, static_cast<std::uint32_t>(m.bins.size()));
  detail::put_le(os, static_cast<std::uint32_t>(m.rows()));
  detail::put_le(os, static_cast<std::uint32_t>(m.cols()));
  detail::put_le(os, m.sample_rate);
  detail::put_le(os, static_cast<double>(m.fft_size));
  for (const auto& bin : m.bins) {
    for (Eigen::Index r = 0; r < bin.rows(); ++r) {
      for (Eigen::Index c = 0; c < bin.cols(); ++c) {
        detail::put_complex64(os, bin(r, c));
      }
    }
  }
  if (!os) throw Error("write failed: " + path);
}

inline EncodingMatrix read_encoding_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  detail::expect_magic(is, kEncodingMagic, "AMBENC1");
  const auto bins = detail::get_le<std::uint32_t>(is);
  const auto rows = detail::get_le<std::uint32_t>(is);
  const auto cols = detail::get_le<std::uint32_t>(is);
  EncodingMatrix m;
  m.sample_rate = detail::get_le<double>(is);
  m.fft_size = static_cast<std::size_t>(detail::get_le<double>(is));
  if (!(m.sample_rate > 0.0) || m.fft_size == 0) {
    throw Error("AMBENC1: invalid sample rate or fft size");
  }
  for (std::uint32_t f = 0; f < bins; ++f) {
    m.freqs.push_back(static_cast<double>(f) * m.sample_rate /
                      static_cast<double>(m.fft_size));
    MatrixXcd bin(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        bin(r, c) = detail::get_complex64(is);
      }
    }
    m.bins.push_back(std::move(bin));
  }
  return m;
}

inline void write_tf_encoding_matrix(const std::string& path,
                                     const TFEncodingMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  detail::put_magic(os, kTFEncodingMagic);
  detail::put_le(os, static_cast<std::uint32_t>(m.frames()));
  detail::put_le(os, static_cast<std::uint32_t>(m.bins()));
  detail::put_le(os, static_cast<std::uint32_t>(m.rows()));
  detail::put_le(os, static_cast<std::uint32_t>(m.cols()));
  detail::put_le(os, m.sample_rate);
  detail::put_le(os, static_cast<double>(m.fft_size));
  for (const cdouble& z : m.data()) detail::put_complex64(os, z);
  if (!os) throw Error("write failed: " + path);
}

inline TFEncodingMatrix read_tf_encoding_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  detail::expect_magic(is, kTFEncodingMagic, "AMBTFE1");
  const auto frames = detail::get_le<std::uint32_t>(is);
  const auto bins = detail::get_le<std::uint32_t>(is);
  const auto rows = detail::get_le<std::uint32_t>(is);
  const auto cols = detail::get_le<std::uint32_t>(is);
  TFEncodingMatrix m(frames, bins, rows, cols);
  m.sample_rate = detail::get_le<double>(is);
  m.fft_size = static_cast<std::size_t>(detail::get_le<double>(is));
  for (cdouble& z : m.data()) z = detail::get_complex64(is);
  return m;
}

}  // namespace foaenc
