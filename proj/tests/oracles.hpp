// SPDX-License-Identifier: Apache-2.0
//
// Reference computations used only by tests. Nothing here calls into the
// code paths it is used to check (except plain containers).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <span>
#include <vector>

#include "oelab/linalg.hpp"
#include "oelab/metrics.hpp"

namespace oelab::oracle {

inline constexpr double kFdStep = 1e-5;

/// Central-difference gradient of f at x.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, double step = kFdStep) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps components whose true value
/// is ~0 from dividing round-off by round-off.
inline double rel_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_error(a[i], b[i], floor));
  return worst;
}

/// Gauss-Jordan inverse with partial pivoting.
inline Matrix inverse(Matrix a) {
  const std::size_t n = a.rows();
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a(c, k), a(piv, k));
      std::swap(inv(c, k), inv(piv, k));
    }
    const double d = a(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      a(c, k) /= d;
      inv(c, k) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      for (std::size_t k = 0; k < n; ++k) {
        a(r, k) -= f * a(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return inv;
}

/// u^T A^{-1} u via an explicit inverse.
inline double quadform_explicit(const Matrix& a, std::span<const double> u) {
  const Matrix inv = inverse(a);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < u.size(); ++j) s += u[i] * inv(i, j) * u[j];
  return s;
}

/// Multivariate normal density evaluated from an explicit inverse and a
/// Leibniz-free determinant (LU via Gaussian elimination).
inline double gaussian_density(std::span<const double> z, std::span<const double> mean, const Matrix& cov) {
  const std::size_t d = z.size();
  Matrix a = cov;
  double det = 1.0;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (piv != c) {
      for (std::size_t k = 0; k < d; ++k) std::swap(a(c, k), a(piv, k));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < d; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < d; ++k) a(r, k) -= f * a(c, k);
    }
  }
  std::vector<double> u(d);
  for (std::size_t i = 0; i < d; ++i) u[i] = z[i] - mean[i];
  const double q = quadform_explicit(cov, u);
  return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * std::numbers::pi, static_cast<double>(d)) * det);
}

/// Pairwise AUROC: concordant pairs + half the ties, over all (in, out) pairs.
inline double auroc_pairs(std::span<const ScoreRecord> r) {
  double num = 0.0, den = 0.0;
  for (const auto& a : r)
    if (a.domain == Domain::in)
      for (const auto& b : r)
        if (b.domain == Domain::out) {
          num += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
          den += 1.0;
        }
  return num / den;
}

/// AUPR by recomputing precision and recall from scratch at every distinct
/// threshold (predict positive when the oriented score >= threshold).
inline double aupr_sweep(std::span<const ScoreRecord> r, Domain positive) {
  auto oriented = [&](const ScoreRecord& x) { return positive == Domain::in ? x.score : -x.score; };
  std::set<double, std::greater<>> thresholds;
  double n_pos = 0.0;
  for (const auto& x : r) {
    thresholds.insert(oriented(x));
    n_pos += x.domain == positive;
  }
  double area = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (const auto& x : r)
      if (oriented(x) >= t) {
        predicted += 1.0;
        tp += x.domain == positive;
      }
    const double recall = tp / n_pos;
    area += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return area;
}

/// FPR at target TPR by trying every observed score as the threshold and
/// keeping the largest one that reaches the target.
inline double fpr_sweep(std::span<const ScoreRecord> r, double target) {
  double n_in = 0.0, n_out = 0.0;
  for (const auto& x : r) (x.domain == Domain::in ? n_in : n_out) += 1.0;
  double best_tau = -HUGE_VAL;
  bool found = false;
  for (const auto& cand : r) {
    double tp = 0.0;
    for (const auto& x : r) tp += x.domain == Domain::in && x.score >= cand.score;
    if (tp / n_in >= target && (!found || cand.score > best_tau)) {
      best_tau = cand.score;
      found = true;
    }
  }
  if (!found) return 0.0;
  double fp = 0.0;
  for (const auto& x : r) fp += x.domain == Domain::out && x.score >= best_tau;
  return fp / n_out;
}

}  // namespace oelab::oracle
