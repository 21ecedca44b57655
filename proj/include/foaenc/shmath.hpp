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

// Real spherical harmonics (ACN ordering, N3D normalization, no
// Condon-Shortley phase), spherical quadrature grids and the discrete
// spherical-harmonic transform of point sources.
//
// Conversion to SN3D (ambiX) for export: divide channel n by sqrt(2n + 1).

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "foaenc/common.hpp"

namespace foaenc {

/// A direction on the unit sphere. Azimuth is counterclockwise from +x in
/// [-pi, pi); elevation is measured from the horizontal plane in
/// [-pi/2, pi/2].
struct Direction {
  double azimuth = 0.0;
  double elevation = 0.0;

  bool valid() const {
    return std::isfinite(azimuth) && std::isfinite(elevation) &&
           azimuth >= -kPi && azimuth < kPi && elevation >= -kPi / 2 &&
           elevation <= kPi / 2;
  }

  Vec3 unit_vector() const {
    const double ce = std::cos(elevation);
    return {ce * std::cos(azimuth), ce * std::sin(azimuth),
            std::sin(elevation)};
  }

  /// Direction of a nonzero vector. Azimuth pi is folded to -pi.
  static Direction from_vector(const Vec3& v) {
    const double r = v.norm();
    if (!(r > 0.0)) throw Error("direction of a zero vector is undefined");
    double az = std::atan2(v.y(), v.x());
    if (az >= kPi) az -= 2 * kPi;
    const double el = std::asin(std::clamp(v.z() / r, -1.0, 1.0));
    return {az, el};
  }
};

struct SHConfig {
  int order = 1;

  std::size_t channels() const {
    return static_cast<std::size_t>((order + 1) * (order + 1));
  }
};

inline constexpr std::size_t acn_index(int n, int m) {
  return static_cast<std::size_t>(n * n + n + m);
}

/// Real SH values y_N(dir), ACN-ordered. For N = 1: [W, Y, Z, X].
class SHVector {
 public:
  SHVector() = default;
  explicit SHVector(std::size_t channels) : values_(channels, 0.0) {}
  explicit SHVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vector() const { return values_; }

 private:
  std::vector<double> values_;
};

namespace detail {

inline double factorial_ratio(int lo, int hi) {
  // (lo)! / (hi)! for lo <= hi
  double r = 1.0;
  for (int k = lo + 1; k <= hi; ++k) r /= k;
  return r;
}

}  // namespace detail

inline SHVector eval_real_sh(const Direction& dir, const SHConfig& config) {
  if (!dir.valid()) throw Error("direction out of range");
  if (config.order < 0) throw Error("SH order must be non-negative");
  const int order = config.order;
  SHVector out(config.channels());

  const double x = std::sin(dir.elevation);
  const double s = std::cos(dir.elevation);  // sqrt(1 - x^2), >= 0

  // Associated Legendre functions without the Condon-Shortley phase.
  std::vector<double> legendre((order + 1) * (order + 1), 0.0);
  auto p = [&](int n, int m) -> double& {
    return legendre[static_cast<std::size_t>(n * (order + 1) + m)];
  };
  double pmm = 1.0;
  for (int m = 0; m <= order; ++m) {
    if (m > 0) pmm *= (2 * m - 1) * s;
    p(m, m) = pmm;
    if (m + 1 <= order) p(m + 1, m) = x * (2 * m + 1) * pmm;
    for (int n = m + 2; n <= order; ++n) {
      p(n, m) = ((2 * n - 1) * x * p(n - 1, m) - (n + m - 1) * p(n - 2, m)) /
                (n - m);
    }
  }

  for (int n = 0; n <= order; ++n) {
    for (int m = -n; m <= n; ++m) {
      const int am = std::abs(m);
      const double norm =
          std::sqrt((2 * n + 1) * (am == 0 ? 1.0 : 2.0) *
                    detail::factorial_ratio(n - am, n + am));
      const double trig = m > 0   ? std::cos(m * dir.azimuth)
                          : m < 0 ? std::sin(am * dir.azimuth)
                                  : 1.0;
      out[acn_index(n, m)] = norm * p(n, am) * trig;
    }
  }
  return out;
}

/// Quadrature rule on the unit sphere. Weights sum to 4*pi.
struct SphereGrid {
  std::vector<Direction> directions;
  std::vector<double> weights;
  int exact_degree = 0;  // polynomial degree integrated exactly

  std::size_t size() const { return directions.size(); }
};

inline constexpr int kMaxGridDegree = 60;

namespace detail {

inline SphereGrid grid_from_vectors(const std::vector<Vec3>& points,
                                    const std::vector<double>& unit_weights,
                                    int exact_degree) {
  SphereGrid g;
  g.exact_degree = exact_degree;
  for (std::size_t i = 0; i < points.size(); ++i) {
    g.directions.push_back(Direction::from_vector(points[i]));
    g.weights.push_back(4.0 * kPi * unit_weights[i]);
  }
  return g;
}

// Lebedev rules: orbits of the octahedral group.
inline void add_axes(std::vector<Vec3>& pts, std::vector<double>& w,
                     double weight) {
  for (int axis = 0; axis < 3; ++axis) {
    for (double sgn : {1.0, -1.0}) {
      Vec3 v = Vec3::Zero();
      v[axis] = sgn;
      pts.push_back(v);
      w.push_back(weight);
    }
  }
}

inline void add_edges(std::vector<Vec3>& pts, std::vector<double>& w,
                      double weight) {
  const double a = 1.0 / std::sqrt(2.0);
  for (int zero_axis = 0; zero_axis < 3; ++zero_axis) {
    for (double s1 : {1.0, -1.0}) {
      for (double s2 : {1.0, -1.0}) {
        Vec3 v = Vec3::Zero();
        v[(zero_axis + 1) % 3] = s1 * a;
        v[(zero_axis + 2) % 3] = s2 * a;
        pts.push_back(v);
        w.push_back(weight);
      }
    }
  }
}

inline void add_corners(std::vector<Vec3>& pts, std::vector<double>& w,
                        double weight) {
  const double a = 1.0 / std::sqrt(3.0);
  for (double sx : {1.0, -1.0}) {
    for (double sy : {1.0, -1.0}) {
      for (double sz : {1.0, -1.0}) {
        pts.emplace_back(sx * a, sy * a, sz * a);
        w.push_back(weight);
      }
    }
  }
}

inline SphereGrid lebedev_grid(int min_degree) {
  std::vector<Vec3> pts;
  std::vector<double> w;
  switch (min_degree) {
    case 1:  // 6 points, degree 3
      add_axes(pts, w, 1.0 / 6.0);
      return grid_from_vectors(pts, w, 3);
    case 2:  // 14 points, degree 5
      add_axes(pts, w, 1.0 / 15.0);
      add_corners(pts, w, 3.0 / 40.0);
      return grid_from_vectors(pts, w, 5);
    case 3:  // 26 points, degree 7
      add_axes(pts, w, 1.0 / 21.0);
      add_edges(pts, w, 4.0 / 105.0);
      add_corners(pts, w, 9.0 / 280.0);
      return grid_from_vectors(pts, w, 7);
    default:
      throw Error("no stored Lebedev rule for degree " +
                  std::to_string(min_degree));
  }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
inline void gauss_legendre(int n, std::vector<double>& nodes,
                           std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double wi = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = wi;
  }
}

inline SphereGrid product_grid(int min_degree) {
  const int degree = 2 * min_degree;
  const int n_el = min_degree + 1;  // exact to 2*n_el - 1 >= degree
  const int n_az = degree + 1;
  std::vector<double> nodes, gw;
  gauss_legendre(n_el, nodes, gw);
  SphereGrid g;
  g.exact_degree = 2 * n_el - 1;
  for (int i = 0; i < n_el; ++i) {
    const double el = std::asin(nodes[i]);
    for (int j = 0; j < n_az; ++j) {
      double az = -kPi + 2.0 * kPi * j / n_az;
      g.directions.push_back({az, el});
      g.weights.push_back(gw[i] * 2.0 * kPi / n_az);
    }
  }
  return g;
}

}  // namespace detail

/// Quadrature grid exact for products of SHs up to order `min_degree`
/// (polynomial degree 2 * min_degree). Degrees 1-3 use stored Lebedev
/// rules; 4..kMaxGridDegree use a Gauss-Legendre x equiangular product.
inline SphereGrid sphere_grid(int min_degree) {
  if (min_degree < 1 || min_degree > kMaxGridDegree) {
    throw Error("unsupported grid degree " + std::to_string(min_degree) +
                "; supported degrees: 1-3 (Lebedev 6/14/26 points), 4-" +
                std::to_string(kMaxGridDegree) + " (Gauss-Legendre product)");
  }
  if (min_degree <= 3) return detail::lebedev_grid(min_degree);
  return detail::product_grid(min_degree);
}

/// Sum_i amplitudes[i] * y_N(dirs[i]).
inline SHVector sht_point_sources(std::span<const double> amplitudes,
                                  std::span<const Direction> dirs,
                                  const SHConfig& config) {
  if (amplitudes.size() != dirs.size()) {
    throw Error("sht_point_sources: " + std::to_string(amplitudes.size()) +
                " amplitudes but " + std::to_string(dirs.size()) +
                " directions");
  }
  SHVector out(config.channels());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const SHVector y = eval_real_sh(dirs[i], config);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += amplitudes[i] * y[k];
  }
  return out;
}

/// K x D matrix of SH values (channels by grid points).
inline Eigen::MatrixXd sh_matrix(const SphereGrid& grid,
                                 const SHConfig& config) {
  Eigen::MatrixXd Y(config.channels(), grid.size());
  for (std::size_t d = 0; d < grid.size(); ++d) {
    const SHVector y = eval_real_sh(grid.directions[d], config);
    for (std::size_t k = 0; k < y.size(); ++k) Y(k, d) = y[k];
  }
  return Y;
}

}  // namespace foaenc
