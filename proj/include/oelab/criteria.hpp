// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

#include "oelab/error.hpp"
#include "oelab/linalg.hpp"

namespace oelab {

/// A scalar loss and its gradient with respect to the head's scores.
struct LossReport {
  double value = 0.0;
  Vector d_scores;

  LossReport& operator+=(const LossReport& o) {
    value += o.value;
    if (d_scores.empty()) d_scores.assign(o.d_scores.size(), 0.0);
    for (std::size_t i = 0; i < d_scores.size(); ++i) d_scores[i] += o.d_scores[i];
    return *this;
  }

  LossReport scaled(double w) const {
    LossReport r{w * value, d_scores};
    for (double& g : r.d_scores) g *= w;
    return r;
  }
};

enum class CriterionKind { plain, oe, energy, ice, ice_minus, bce };

inline std::string_view to_string(CriterionKind k) {
  switch (k) {
    case CriterionKind::plain: return "plain";
    case CriterionKind::oe: return "oe";
    case CriterionKind::energy: return "energy";
    case CriterionKind::ice: return "ice";
    case CriterionKind::ice_minus: return "ice_minus";
    case CriterionKind::bce: return "bce";
  }
  return "?";
}

inline CriterionKind parse_criterion(std::string_view s) {
  for (auto k : {CriterionKind::plain, CriterionKind::oe, CriterionKind::energy, CriterionKind::ice,
                 CriterionKind::ice_minus, CriterionKind::bce})
    if (to_string(k) == s) return k;
  throw Error("unknown criterion '" + std::string(s) + "'");
}

/// Outlier weight used when none is configured: OE 0.5, Energy 0.1, ICE 1.0.
inline double default_lambda(CriterionKind k) {
  switch (k) {
    case CriterionKind::plain: return 0.0;
    case CriterionKind::oe: return 0.5;
    case CriterionKind::energy: return 0.1;
    case CriterionKind::ice:
    case CriterionKind::ice_minus: return 1.0;
    case CriterionKind::bce: return 1.0;
  }
  return 0.0;
}

/// ICE criteria consume Gaussian-head scores (all <= 0).
inline bool needs_gaussian_head(CriterionKind k) {
  return k == CriterionKind::ice || k == CriterionKind::ice_minus;
}

struct CriterionConfig {
  CriterionKind kind = CriterionKind::plain;
  double lambda = 0.0;

  static CriterionConfig with_default(CriterionKind k) { return {k, default_lambda(k)}; }
};

namespace detail {

inline double logsumexp(std::span<const double> s) {
  const double mx = *std::max_element(s.begin(), s.end());
  if (std::isinf(mx)) return mx;
  double sum = 0.0;
  for (double v : s) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

inline Vector softmax(std::span<const double> s) {
  const double lse = logsumexp(s);
  Vector p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p[i] = std::exp(s[i] - lse);
  return p;
}

inline void require_class(std::size_t y, std::size_t k, const char* what) {
  if (y >= k) throw Error(std::string(what) + ": class index out of range");
}

inline void require_gaussian_scores(std::span<const double> h, const char* what) {
  for (double v : h)
    if (v > 0.0 || std::isnan(v)) throw InvalidScore(std::string(what) + ": Gaussian-head scores must be <= 0");
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// -log softmax(scores)_y.
inline LossReport sce(std::span<const double> scores, std::size_t y) {
  detail::require_class(y, scores.size(), "sce");
  LossReport r{detail::logsumexp(scores) - scores[y], detail::softmax(scores)};
  r.d_scores[y] -= 1.0;
  return r;
}

/// Cross-entropy to the uniform target: -(1/K) sum_k log softmax_k.
inline LossReport oe_uniform(std::span<const double> scores) {
  const std::size_t k = scores.size();
  if (k < 2) throw Error("oe_uniform: need at least two classes");
  const double inv_k = 1.0 / static_cast<double>(k);
  const double lse = detail::logsumexp(scores);
  double mean = 0.0;
  for (double v : scores) mean += v;
  mean *= inv_k;
  LossReport r{lse - mean, detail::softmax(scores)};
  for (double& g : r.d_scores) g -= inv_k;
  return r;
}

/// logsumexp(scores); its gradient is softmax(scores).
inline LossReport energy(std::span<const double> scores) {
  if (scores.empty()) throw Error("energy: empty score vector");
  return {detail::logsumexp(scores), detail::softmax(scores)};
}

/// -h_y.
inline LossReport ice_id(std::span<const double> h, std::size_t y) {
  detail::require_class(y, h.size(), "ice_id");
  detail::require_gaussian_scores(h, "ice_id");
  LossReport r{-h[y], Vector(h.size(), 0.0)};
  r.d_scores[y] = -1.0;
  return r;
}

/// Floor on 1 - exp(max_i h_i) in ice_ood.
inline constexpr double kIceOodEpsilon = 1e-12;

/// -log(1 - exp(h*)), h* = max_i h_i (first index on ties).
///
/// 1 - exp(h*) is floored at kIceOodEpsilon; the gradient uses the same
/// floored denominator, exp(h*) / max(1 - exp(h*), eps), at the argmax only.
inline LossReport ice_ood(std::span<const double> h) {
  if (h.empty()) throw Error("ice_ood: empty score vector");
  detail::require_gaussian_scores(h, "ice_ood");
  const auto it = std::max_element(h.begin(), h.end());
  const double hs = *it;
  const double one_minus = -std::expm1(hs);
  LossReport r{0.0, Vector(h.size(), 0.0)};
  if (one_minus < kIceOodEpsilon) {
    r.value = -std::log(kIceOodEpsilon);
  } else if (hs > -std::numbers::ln2) {
    r.value = -std::log(one_minus);
  } else {
    r.value = -std::log1p(-std::exp(hs));
  }
  r.d_scores[static_cast<std::size_t>(it - h.begin())] = std::exp(hs) / std::max(one_minus, kIceOodEpsilon);
  return r;
}

/// Per-logit sigmoid binary cross-entropy, summed over classes.
inline LossReport bce_outlier(std::span<const double> scores, std::span<const double> targets) {
  detail::require_dims(targets.size(), scores.size(), "bce_outlier");
  LossReport r{0.0, Vector(scores.size(), 0.0)};
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double t = targets[k];
    if (t != 0.0 && t != 1.0) throw Error("bce_outlier: targets must be 0 or 1");
    r.value += t == 1.0 ? detail::softplus(-scores[k]) : detail::softplus(scores[k]);
    r.d_scores[k] = detail::sigmoid(scores[k]) - t;
  }
  return r;
}

/// The in-distribution side of an objective for one labeled sample.
/// `penalty` is the lambda-weighted extra term alone; `total` adds sce.
struct InBranch {
  LossReport sce;
  LossReport penalty;

  LossReport total() const {
    LossReport t = sce;
    t += penalty;
    return t;
  }
};

inline InBranch in_branch(const CriterionConfig& cfg, std::span<const double> scores, std::size_t y) {
  InBranch b{sce(scores, y), {0.0, Vector(scores.size(), 0.0)}};
  const double lam = cfg.lambda;
  switch (cfg.kind) {
    case CriterionKind::energy:
      b.penalty = energy(scores).scaled(-lam);
      break;
    case CriterionKind::ice:
      b.penalty = ice_id(scores, y).scaled(lam);
      break;
    case CriterionKind::ice_minus:
      detail::require_gaussian_scores(scores, "ice_minus");
      break;
    case CriterionKind::bce: {
      Vector onehot(scores.size(), 0.0);
      onehot[y] = 1.0;
      b.penalty = bce_outlier(scores, onehot).scaled(lam);
      break;
    }
    case CriterionKind::plain:
    case CriterionKind::oe:
      break;
  }
  return b;
}

/// The lambda-weighted outlier term for one outlier sample.
inline LossReport out_branch(const CriterionConfig& cfg, std::span<const double> scores) {
  const double lam = cfg.lambda;
  switch (cfg.kind) {
    case CriterionKind::plain: return {0.0, Vector(scores.size(), 0.0)};
    case CriterionKind::oe: return oe_uniform(scores).scaled(lam);
    case CriterionKind::energy: return energy(scores).scaled(lam);
    case CriterionKind::ice:
    case CriterionKind::ice_minus: return ice_ood(scores).scaled(lam);
    case CriterionKind::bce: return bce_outlier(scores, Vector(scores.size(), 0.0)).scaled(lam);
  }
  return {};
}

/// One (in, out) pair evaluated under a full objective.
struct ObjectiveReport {
  double total = 0.0;
  InBranch in;
  LossReport out;
};

inline ObjectiveReport objective(const CriterionConfig& cfg, std::span<const double> in_scores, std::size_t y,
                                 std::span<const double> out_scores) {
  ObjectiveReport r{0.0, in_branch(cfg, in_scores, y), out_branch(cfg, out_scores)};
  r.total = r.in.sce.value + r.in.penalty.value + r.out.value;
  return r;
}

/// sce(in) + lambda * (-energy(in) + energy(out)).
inline ObjectiveReport energy_objective(std::span<const double> in_scores, std::size_t y,
                                        std::span<const double> out_scores, double lambda) {
  return objective({CriterionKind::energy, lambda}, in_scores, y, out_scores);
}

/// sce(in_h) + lambda * (ice_id(in_h) + ice_ood(out_h)); with_id = false drops
/// the ice_id term (the ICE^- ablation).
inline ObjectiveReport ice_objective(std::span<const double> in_h, std::size_t y, std::span<const double> out_h,
                                     double lambda, bool with_id = true) {
  return objective({with_id ? CriterionKind::ice : CriterionKind::ice_minus, lambda}, in_h, y, out_h);
}

}  // namespace oelab
