// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "oelab/error.hpp"
#include "oelab/gda.hpp"
#include "oelab/io.hpp"

namespace oelab {

/// A detector output; higher scores mean "more in-distribution".
struct ScoreRecord {
  double score = 0.0;
  Domain domain = Domain::in;
};

struct MetricsReport {
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr95 = 0.0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> require_both_domains(std::span<const ScoreRecord> records) {
  std::size_t n_in = 0, n_out = 0;
  for (const auto& r : records) {
    if (std::isnan(r.score)) throw InvalidScore("metrics: NaN score");
    (r.domain == Domain::in ? n_in : n_out)++;
  }
  if (n_in == 0 || n_out == 0) throw MissingDomain("metrics need at least one in and one out record");
  return {n_in, n_out};
}

}  // namespace detail

/// Mann-Whitney statistic: P(in-score > out-score), ties counted as 1/2.
/// Computed from mid-ranks after one sort.
inline double auroc(std::span<const ScoreRecord> records) {
  const auto [n_in, n_out] = detail::require_both_domains(records);
  std::vector<ScoreRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  double rank_sum_in = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t in_group = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) in_group += sorted[j++].domain == Domain::in;
    // 1-based ranks i+1..j share the mid-rank.
    rank_sum_in += static_cast<double>(in_group) * 0.5 * static_cast<double>(i + 1 + j);
    i = j;
  }
  const double ni = static_cast<double>(n_in);
  const double u = rank_sum_in - ni * (ni + 1.0) / 2.0;
  return u / (ni * static_cast<double>(n_out));
}

/// Step-wise area under the precision-recall curve for the chosen positive
/// domain: sum over descending distinct thresholds of (R_k - R_{k-1}) * P_k.
/// When `positive` is out, records are ranked by negated score.
inline double aupr(std::span<const ScoreRecord> records, Domain positive) {
  const auto [n_in, n_out] = detail::require_both_domains(records);
  const double n_pos = static_cast<double>(positive == Domain::in ? n_in : n_out);
  std::vector<std::pair<double, bool>> ranked;
  ranked.reserve(records.size());
  for (const auto& r : records)
    ranked.emplace_back(positive == Domain::in ? r.score : -r.score, r.domain == positive);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double area = 0.0;
  std::size_t tp = 0, seen = 0, prev_tp = 0;
  for (std::size_t i = 0; i < ranked.size();) {
    std::size_t j = i;
    while (j < ranked.size() && ranked[j].first == ranked[i].first) tp += ranked[j++].second;
    seen = j;
    if (tp != prev_tp) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      area += static_cast<double>(tp - prev_tp) * precision;
      prev_tp = tp;
    }
    i = j;
  }
  // Round-off can push a perfect ranking a few ulps past 1.
  return std::min(1.0, area / n_pos);
}

/// Fraction of out-records scoring >= tau, where tau is the largest score
/// such that the fraction of in-records scoring >= tau reaches tpr_target.
inline double fpr_at_tpr(std::span<const ScoreRecord> records, double tpr_target = 0.95) {
  const auto [n_in, n_out] = detail::require_both_domains(records);
  std::vector<double> in_scores;
  in_scores.reserve(n_in);
  for (const auto& r : records)
    if (r.domain == Domain::in) in_scores.push_back(r.score);
  std::sort(in_scores.begin(), in_scores.end(), std::greater<>());
  const double n = static_cast<double>(n_in);
  // Smallest k with k / n >= target, compared exactly as the ratio.
  std::size_t k = 0;
  while (k < n_in && static_cast<double>(k) / n < tpr_target) ++k;
  if (k == 0) return 0.0;
  const double tau = in_scores[k - 1];
  std::size_t fp = 0;
  for (const auto& r : records) fp += r.domain == Domain::out && r.score >= tau;
  return static_cast<double>(fp) / static_cast<double>(n_out);
}

/// AUPR is reported with `aupr_positive` as the positive class.
inline MetricsReport evaluate_records(std::span<const ScoreRecord> records, Domain aupr_positive = Domain::out) {
  const auto [n_in, n_out] = detail::require_both_domains(records);
  return {auroc(records), aupr(records, aupr_positive), fpr_at_tpr(records, 0.95), n_in, n_out};
}

/// Equal-width histogram over [lo, hi]. Bins are left-closed/right-open
/// except the last, which is closed. Values outside the range land in the
/// end bins and are tallied in `clamped`.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t clamped = 0;

  std::vector<double> edges() const {
    std::vector<double> e(counts.size() + 1);
    for (std::size_t i = 0; i <= counts.size(); ++i)
      e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(counts.size());
    return e;
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline Histogram histogram(std::span<const double> scores, std::size_t bins, double lo, double hi) {
  if (bins < 1) throw Error("histogram: need at least one bin");
  if (!(lo < hi)) throw Error("histogram: empty range");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), 0};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double s : scores) {
    if (std::isnan(s)) throw InvalidScore("histogram: NaN score");
    std::size_t b = 0;
    if (s < lo) {
      ++h.clamped;
    } else if (s >= hi) {
      if (s > hi) ++h.clamped;
      b = bins - 1;
    } else {
      b = std::min(bins - 1, static_cast<std::size_t>((s - lo) / width));
    }
    ++h.counts[b];
  }
  return h;
}

/// CSV with header score,domain.
inline std::string to_csv(std::span<const ScoreRecord> records) {
  std::string s = "score,domain\n";
  for (const auto& r : records) s += io::format_double(r.score) + "," + to_string(r.domain) + "\n";
  return s;
}

inline std::vector<ScoreRecord> score_records_from_csv(std::string_view text) {
  const auto rows = io::lines(text);
  if (rows.empty() || rows[0] != "score,domain") throw Error("score CSV: header must be score,domain");
  std::vector<ScoreRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = io::split(rows[r], ',');
    if (cells.size() != 2) throw Error("score CSV: row " + std::to_string(r) + " has wrong width");
    out.push_back({io::parse_double(cells[0]), parse_domain(cells[1])});
  }
  return out;
}

}  // namespace oelab
