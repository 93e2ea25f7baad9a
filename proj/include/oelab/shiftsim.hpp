// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oelab/criteria.hpp"
#include "oelab/error.hpp"
#include "oelab/gda.hpp"
#include "oelab/heads.hpp"
#include "oelab/io.hpp"

namespace oelab {

/// Free feature vectors with domain tags and labels; the simulation treats
/// each entry as a trainable variable.
using FeatureBank = LabeledSet;

/// Summary of one snapshot. Distances are squared Mahalanobis under the
/// reference model. Fields over an empty population are NaN.
struct ShiftStats {
  double mean_norm_out = std::numeric_limits<double>::quiet_NaN();
  double mean_nearest_center_out = std::numeric_limits<double>::quiet_NaN();
  double mean_own_center_in = std::numeric_limits<double>::quiet_NaN();
  double mixed_fraction = std::numeric_limits<double>::quiet_NaN();
};

inline ShiftStats shift_stats(const FeatureBank& snapshot, const GdaModel& model, double zeta) {
  detail::require_dims(snapshot.dim, model.dim(), "shift_stats");
  ShiftStats s;
  double norm = 0.0, nearest = 0.0, own = 0.0;
  std::size_t n_out = 0, n_in = 0, mixed = 0;
  for (std::size_t n = 0; n < snapshot.size(); ++n) {
    const Vector& z = snapshot.features[n];
    if (snapshot.domains[n] == Domain::in) {
      own += spd_quadform(model.chol(), subtract(z, model.mean(static_cast<std::size_t>(snapshot.labels[n]))));
      ++n_in;
      continue;
    }
    norm += std::sqrt(squared_norm(z));
    double best = std::numeric_limits<double>::infinity();
    double best_lik = 0.0;
    for (std::size_t i = 0; i < model.classes(); ++i) {
      best = std::min(best, spd_quadform(model.chol(), subtract(z, model.mean(i))));
      best_lik = std::max(best_lik, class_likelihood(model, z, i));
    }
    nearest += best;
    mixed += best_lik > zeta;
    ++n_out;
  }
  if (n_out > 0) {
    s.mean_norm_out = norm / static_cast<double>(n_out);
    s.mean_nearest_center_out = nearest / static_cast<double>(n_out);
    s.mixed_fraction = static_cast<double>(mixed) / static_cast<double>(n_out);
  }
  if (n_in > 0) s.mean_own_center_in = own / static_cast<double>(n_in);
  return s;
}

struct ShiftSimOptions {
  std::size_t steps = 100;
  double lr = 0.05;
  double zeta = 0.0;  // threshold for ShiftStats::mixed_fraction
};

/// snapshots[0] is the initial bank; snapshots[t] follows step t.
struct ShiftTrajectory {
  std::vector<FeatureBank> snapshots;
  std::vector<ShiftStats> stats;
};

/// Gradient of one feature's loss with respect to the feature itself, under
/// a head frozen at the GDA closed form.
class FrozenHead {
 public:
  FrozenHead(const GdaModel& model, bool gaussian)
      : gaussian_(gaussian),
        linear_(closed_form_discriminant(model)),
        gauss_(gaussian_head_from(model)) {}

  Vector scores(std::span<const double> z) const {
    return gaussian_ ? gaussian_forward(gauss_, z) : linear_forward(linear_, z);
  }

  Vector input_gradient(std::span<const double> z, std::span<const double> d_scores) const {
    return gaussian_ ? gaussian_backward(gauss_, z, d_scores).d_input : matvec_transposed(linear_.weights, d_scores);
  }

 private:
  bool gaussian_;
  LinearHeadParams linear_;
  GaussianHeadParams gauss_;
};

/// Full-batch gradient descent on the features of `bank`. Head parameters
/// stay at the GDA closed form of `head_source`: a linear head, or for the
/// ICE criteria a Gaussian head with m_i = mu_i and L = chol(Sigma).
/// In-features follow the in-distribution branch of the criterion with their
/// labels; outliers follow the outlier branch.
inline ShiftTrajectory run_shift_sim(const CriterionConfig& criterion, const FeatureBank& bank,
                                     const GdaModel& head_source, const ShiftSimOptions& opt) {
  if (opt.steps < 1) throw Error("run_shift_sim: steps must be at least 1");
  if (!(opt.lr >= 0.0)) throw Error("run_shift_sim: lr must be non-negative");
  detail::require_dims(bank.dim, head_source.dim(), "run_shift_sim");
  const FrozenHead head(head_source, needs_gaussian_head(criterion.kind));

  ShiftTrajectory traj;
  traj.snapshots.reserve(opt.steps + 1);
  traj.snapshots.push_back(bank);
  traj.stats.push_back(shift_stats(bank, head_source, opt.zeta));
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    FeatureBank next = traj.snapshots.back();
    const FeatureBank& cur = traj.snapshots.back();
    for (std::size_t n = 0; n < cur.size(); ++n) {
      const Vector& z = cur.features[n];
      const Vector s = head.scores(z);
      const LossReport loss = cur.domains[n] == Domain::in
                                  ? in_branch(criterion, s, static_cast<std::size_t>(cur.labels[n])).total()
                                  : out_branch(criterion, s);
      const Vector g = head.input_gradient(z, loss.d_scores);
      for (std::size_t j = 0; j < z.size(); ++j) next.features[n][j] = z[j] - opt.lr * g[j];
      if (!all_finite(next.features[n])) throw NonFiniteState(step, "feature " + std::to_string(n));
    }
    traj.stats.push_back(shift_stats(next, head_source, opt.zeta));
    traj.snapshots.push_back(std::move(next));
  }
  return traj;
}

/// Header step,idx,domain,x0,...,x{d-1}.
inline std::string trajectory_csv(const ShiftTrajectory& traj) {
  std::string s = "step,idx,domain";
  const std::size_t d = traj.snapshots.empty() ? 0 : traj.snapshots.front().dim;
  for (std::size_t j = 0; j < d; ++j) s += ",x" + std::to_string(j);
  s += '\n';
  for (std::size_t t = 0; t < traj.snapshots.size(); ++t) {
    const auto& snap = traj.snapshots[t];
    for (std::size_t n = 0; n < snap.size(); ++n)
      s += std::to_string(t) + "," + std::to_string(n) + "," + to_string(snap.domains[n]) + "," +
           io::join_doubles(snap.features[n]) + "\n";
  }
  return s;
}

/// Header step,mean_norm_out,mean_nearest_center_out,mean_own_center_in,mixed_fraction.
inline std::string stats_csv(const ShiftTrajectory& traj) {
  std::string s = "step,mean_norm_out,mean_nearest_center_out,mean_own_center_in,mixed_fraction\n";
  for (std::size_t t = 0; t < traj.stats.size(); ++t) {
    const auto& st = traj.stats[t];
    s += std::to_string(t) + "," + io::join_doubles(std::vector<double>{st.mean_norm_out, st.mean_nearest_center_out,
                                                                        st.mean_own_center_in, st.mixed_fraction}) +
         "\n";
  }
  return s;
}

/// Indices (A, B) of an in-sample and an outlier on which the closed-form
/// logit for class i and the class-i likelihood disagree:
/// f_i(B) > f_i(A) while p(B|i) < p(A|i).
struct FalseLikelihoodPair {
  std::size_t in_index = 0;
  std::size_t out_index = 0;
};

/// Scans in-samples A and outliers B in index order and returns the first
/// disagreeing pair, or nothing if none exists.
inline std::optional<FalseLikelihoodPair> find_false_likelihood_pair(const GdaModel& model, const LabeledSet& data,
                                                                     std::size_t class_i) {
  if (class_i >= model.classes()) throw Error("find_false_likelihood_pair: class index out of range");
  detail::require_dims(data.dim, model.dim(), "find_false_likelihood_pair");
  const auto disc = closed_form_discriminant(model);
  std::vector<std::size_t> ins, outs;
  std::vector<double> logit(data.size()), loglik(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    (data.domains[n] == Domain::in ? ins : outs).push_back(n);
    logit[n] = linear_forward(disc, data.features[n])[class_i];
    loglik[n] = class_log_likelihood(model, data.features[n], class_i);
  }
  for (std::size_t a : ins)
    for (std::size_t b : outs)
      if (logit[b] > logit[a] && loglik[b] < loglik[a]) return FalseLikelihoodPair{a, b};
  return std::nullopt;
}

}  // namespace oelab
