// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "oelab/error.hpp"
#include "oelab/linalg.hpp"
#include "oelab/rng.hpp"

namespace oelab {

/// Linear head f(z) = W z + b; row i of W is w_i.
struct LinearHeadParams {
  Matrix weights;
  Vector bias;

  std::size_t classes() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }

  static LinearHeadParams zeros(std::size_t classes, std::size_t dim) {
    return {Matrix(classes, dim), Vector(classes, 0.0)};
  }

  /// Weights N(0, 1/dim), zero bias.
  static LinearHeadParams random(std::size_t classes, std::size_t dim, Rng& rng) {
    auto p = zeros(classes, dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& w : p.weights.data()) w = scale * rng.normal();
    return p;
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("head.weight", std::span<double>(weights.data()));
    fn("head.bias", std::span<double>(bias));
  }

  bool operator==(const LinearHeadParams&) const = default;
};

/// Gaussian head h_i(z) = -(z - m_i)^T (L L^T)^{-1} (z - m_i).
///
/// L is held as `tri_raw`, a packed lower triangle whose off-diagonal entries
/// are used as-is and whose diagonal entries are log-values: L_jj = exp(raw_jj).
struct GaussianHeadParams {
  std::vector<Vector> means;
  LowerTriangular tri_raw;

  std::size_t classes() const noexcept { return means.size(); }
  std::size_t dim() const noexcept { return tri_raw.dim(); }

  LowerTriangular factor() const {
    LowerTriangular l = tri_raw;
    for (std::size_t j = 0; j < l.dim(); ++j) l(j, j) = std::exp(tri_raw(j, j));
    return l;
  }

  static GaussianHeadParams from_factor(std::vector<Vector> means, const LowerTriangular& l) {
    GaussianHeadParams p{std::move(means), l};
    for (std::size_t j = 0; j < l.dim(); ++j) {
      if (!(l(j, j) > 0.0)) throw NotPositiveDefinite("GaussianHeadParams: factor diagonal must be positive");
      p.tri_raw(j, j) = std::log(l(j, j));
    }
    for (const auto& m : p.means) detail::require_dims(m.size(), l.dim(), "GaussianHeadParams mean");
    return p;
  }

  /// Means drawn as 0.1 * N(0, 1), L = identity.
  static GaussianHeadParams random(std::size_t classes, std::size_t dim, Rng& rng) {
    GaussianHeadParams p{std::vector<Vector>(classes, Vector(dim)), LowerTriangular(dim)};
    for (auto& m : p.means)
      for (double& v : m) v = 0.1 * rng.normal();
    return p;
  }

  static GaussianHeadParams zeros(std::size_t classes, std::size_t dim) {
    return {std::vector<Vector>(classes, Vector(dim, 0.0)), LowerTriangular(dim)};
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (std::size_t i = 0; i < means.size(); ++i)
      fn("head.mean" + std::to_string(i), std::span<double>(means[i]));
    fn("head.tri_raw", std::span<double>(tri_raw.packed()));
  }

  bool operator==(const GaussianHeadParams& o) const {
    return means == o.means && tri_raw.packed() == o.tri_raw.packed();
  }
};

template <typename Params>
struct HeadGradients {
  Vector d_input;
  Params d_params;
};

inline Vector linear_forward(const LinearHeadParams& p, std::span<const double> z) {
  detail::require_dims(z.size(), p.dim(), "linear_forward");
  Vector f = matvec(p.weights, z);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += p.bias[i];
  return f;
}

inline HeadGradients<LinearHeadParams> linear_backward(const LinearHeadParams& p, std::span<const double> z,
                                                       std::span<const double> upstream) {
  detail::require_dims(z.size(), p.dim(), "linear_backward input");
  detail::require_dims(upstream.size(), p.classes(), "linear_backward upstream");
  HeadGradients<LinearHeadParams> g{matvec_transposed(p.weights, upstream),
                                    LinearHeadParams::zeros(p.classes(), p.dim())};
  for (std::size_t i = 0; i < p.classes(); ++i) {
    auto row = g.d_params.weights.row(i);
    for (std::size_t j = 0; j < p.dim(); ++j) row[j] = upstream[i] * z[j];
    g.d_params.bias[i] = upstream[i];
  }
  return g;
}

inline Vector gaussian_forward(const GaussianHeadParams& p, std::span<const double> z) {
  detail::require_dims(z.size(), p.dim(), "gaussian_forward");
  const LowerTriangular l = p.factor();
  Vector h(p.classes());
  for (std::size_t i = 0; i < p.classes(); ++i) h[i] = -spd_quadform(l, subtract(z, p.means[i]));
  return h;
}

/// Gradients of sum_i upstream_i * h_i(z).
///
/// With u_i = z - m_i, v_i = L^{-1} u_i and a_i = L^{-T} v_i:
///   dh_i/dz = -2 a_i,  dh_i/dm_i = 2 a_i,  dh_i/dL = 2 tril(a_i v_i^T),
/// and the diagonal of tri_raw picks up the extra factor L_jj from exp.
inline HeadGradients<GaussianHeadParams> gaussian_backward(const GaussianHeadParams& p, std::span<const double> z,
                                                           std::span<const double> upstream) {
  detail::require_dims(z.size(), p.dim(), "gaussian_backward input");
  detail::require_dims(upstream.size(), p.classes(), "gaussian_backward upstream");
  const std::size_t d = p.dim();
  const LowerTriangular l = p.factor();
  HeadGradients<GaussianHeadParams> g{Vector(d, 0.0), GaussianHeadParams::zeros(p.classes(), d)};
  LowerTriangular& dl = g.d_params.tri_raw;
  for (std::size_t i = 0; i < p.classes(); ++i) {
    const double up = upstream[i];
    if (up == 0.0) continue;
    const Vector v = tri_solve_lower(l, subtract(z, p.means[i]));
    const Vector a = tri_solve_upper(l, v);
    for (std::size_t j = 0; j < d; ++j) {
      g.d_input[j] -= 2.0 * up * a[j];
      g.d_params.means[i][j] = 2.0 * up * a[j];
    }
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c <= r; ++c) dl(r, c) += 2.0 * up * a[r] * v[c];
  }
  for (std::size_t j = 0; j < d; ++j) dl(j, j) *= l(j, j);
  return g;
}

/// exp(max_i h_i), the in-distribution confidence of a Gaussian-head score.
///
/// Results that would underflow are clamped to the smallest normal double so
/// the value stays in (0, 1].
inline double ice_confidence(std::span<const double> h) {
  if (h.empty()) throw InvalidScore("ice_confidence: empty score vector");
  double mx = h[0];
  for (double v : h) {
    if (v > 0.0 || std::isnan(v)) throw InvalidScore("ice_confidence: Gaussian-head scores must be <= 0");
    mx = std::max(mx, v);
  }
  return std::max(std::exp(mx), std::numeric_limits<double>::min());
}

}  // namespace oelab
