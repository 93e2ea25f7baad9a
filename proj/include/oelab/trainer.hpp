// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "oelab/backbone.hpp"
#include "oelab/criteria.hpp"
#include "oelab/error.hpp"
#include "oelab/gda.hpp"
#include "oelab/heads.hpp"
#include "oelab/io.hpp"
#include "oelab/metrics.hpp"
#include "oelab/rng.hpp"

namespace oelab {

enum class Schedule { cosine, stairwise };

inline std::string_view to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "stairwise"; }

inline Schedule parse_schedule(std::string_view s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "stairwise") return Schedule::stairwise;
  throw Error("unknown schedule '" + std::string(s) + "'");
}

/// Learning rate at `step` of `total_steps`.
/// cosine: lr0 * (1 + cos(pi * step / T)) / 2.
/// stairwise: lr0, then lr0 * 0.1 from 50% of T, lr0 * 0.01 from 75% of T.
inline double lr_at(Schedule schedule, double initial_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) throw Error("lr_at: step out of range");
  const double t = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  if (schedule == Schedule::cosine) return initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
  if (2 * step < total_steps) return initial_lr;
  if (4 * step < 3 * total_steps) return initial_lr * 0.1;
  return initial_lr * 0.01;
}

enum class HeadKind { linear, gaussian };

inline std::string_view to_string(HeadKind h) { return h == HeadKind::linear ? "linear" : "gaussian"; }

enum class Scorer { msp, max_logit, energy_score, ice_conf };

inline std::string_view to_string(Scorer s) {
  switch (s) {
    case Scorer::msp: return "msp";
    case Scorer::max_logit: return "max_logit";
    case Scorer::energy_score: return "energy_score";
    case Scorer::ice_conf: return "ice_conf";
  }
  return "?";
}

inline Scorer parse_scorer(std::string_view s) {
  for (auto k : {Scorer::msp, Scorer::max_logit, Scorer::energy_score, Scorer::ice_conf})
    if (to_string(k) == s) return k;
  throw Error("unknown scorer '" + std::string(s) + "'");
}

inline Scorer default_scorer(CriterionKind k) {
  switch (k) {
    case CriterionKind::energy: return Scorer::energy_score;
    case CriterionKind::ice:
    case CriterionKind::ice_minus: return Scorer::ice_conf;
    default: return Scorer::msp;
  }
}

/// Backbone plus one of the two heads.
struct Model {
  MlpParams backbone;
  std::variant<LinearHeadParams, GaussianHeadParams> head;

  HeadKind head_kind() const {
    return std::holds_alternative<LinearHeadParams>(head) ? HeadKind::linear : HeadKind::gaussian;
  }

  std::size_t classes() const {
    return std::visit([](const auto& h) { return h.classes(); }, head);
  }

  Vector features(std::span<const double> x) const { return mlp_forward(backbone, x).z; }

  Vector head_scores(std::span<const double> z) const {
    if (const auto* lin = std::get_if<LinearHeadParams>(&head)) return linear_forward(*lin, z);
    return gaussian_forward(std::get<GaussianHeadParams>(head), z);
  }

  Vector scores(std::span<const double> x) const { return head_scores(features(x)); }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    backbone.for_each_tensor(fn);
    std::visit([&](auto& h) { h.for_each_tensor(fn); }, head);
  }

  std::vector<std::span<double>> tensors() {
    std::vector<std::span<double>> out;
    for_each_tensor([&](const std::string&, std::span<double> t) { out.push_back(t); });
    return out;
  }

  Model zeros_like() const {
    Model m{backbone.zeros_like(), head};
    for (auto t : m.tensors()) std::fill(t.begin(), t.end(), 0.0);
    return m;
  }

  bool operator==(const Model& o) const { return backbone == o.backbone && head == o.head; }
};

struct TrainConfig {
  CriterionConfig criterion = CriterionConfig::with_default(CriterionKind::ice);
  double gamma = 1.0;  // multiplies criterion.lambda
  Schedule schedule = Schedule::cosine;
  double initial_lr = 0.01;
  std::size_t epochs = 10;
  std::size_t batch_in = 128;
  std::size_t batch_out = 256;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 8;
  std::size_t classes = 2;
  HeadKind head = HeadKind::gaussian;
  Scorer scorer = Scorer::ice_conf;
  Domain aupr_positive = Domain::out;
  std::size_t hist_bins = 20;

  double outlier_weight() const { return criterion.lambda * gamma; }

  void validate() const {
    if (batch_in < 1 || batch_out < 1) throw ConfigError("batch sizes must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
    if (!(criterion.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
    if (classes < 2) throw ConfigError("need at least two classes");
    if (needs_gaussian_head(criterion.kind) && head != HeadKind::gaussian)
      throw ConfigError(std::string(to_string(criterion.kind)) + " requires the gaussian head");
    if (scorer == Scorer::ice_conf && head != HeadKind::gaussian)
      throw IncompatibleScorer("ice_conf requires the gaussian head");
  }
};

/// He-initialized backbone and a head for `cfg.head`. With a nonempty
/// `train_in` the Gaussian head means start at the per-class means of the
/// initial backbone features; otherwise at 0.1 * N(0, 1). L starts at identity.
inline Model init_model(const TrainConfig& cfg, std::size_t input_dim, const LabeledSet* train_in = nullptr) {
  Rng rng(derive_seed(cfg.seed, "model.init"));
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.feature_dim);
  Model m{MlpParams::he_init(widths, rng), LinearHeadParams{}};
  if (cfg.head == HeadKind::linear) {
    m.head = LinearHeadParams::random(cfg.classes, cfg.feature_dim, rng);
    return m;
  }
  auto g = GaussianHeadParams::random(cfg.classes, cfg.feature_dim, rng);
  if (train_in != nullptr && train_in->count(Domain::in) > 0) {
    std::vector<Vector> sums(cfg.classes, Vector(cfg.feature_dim, 0.0));
    std::vector<std::size_t> counts(cfg.classes, 0);
    for (std::size_t n = 0; n < train_in->size(); ++n) {
      if (train_in->domains[n] != Domain::in) continue;
      const auto y = static_cast<std::size_t>(train_in->labels[n]);
      const Vector z = m.features(train_in->features[n]);
      for (std::size_t j = 0; j < z.size(); ++j) sums[y][j] += z[j];
      ++counts[y];
    }
    for (std::size_t i = 0; i < cfg.classes; ++i)
      if (counts[i] > 0)
        for (std::size_t j = 0; j < cfg.feature_dim; ++j) g.means[i][j] = sums[i][j] / static_cast<double>(counts[i]);
  }
  m.head = std::move(g);
  return m;
}

/// Loss over one batch with gradients for every parameter.
struct BatchResult {
  double loss_in = 0.0;   // mean in-branch loss (sce + weighted penalty)
  double loss_out = 0.0;  // mean weighted outlier loss
  Model grads;

  double total() const { return loss_in + loss_out; }
};

namespace detail {

inline void accumulate(Model& into, Model&& g, double w) {
  auto dst = into.tensors();
  auto src = g.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t)
    for (std::size_t k = 0; k < dst[t].size(); ++k) dst[t][k] += w * src[t][k];
}

/// Gradient of `loss` (a function of the head scores) through head and backbone.
inline Model sample_gradient(const Model& model, const MlpForward& fwd, std::span<const double> d_scores) {
  Model g{MlpParams{}, model.head};
  Vector d_z;
  if (const auto* lin = std::get_if<LinearHeadParams>(&model.head)) {
    auto hg = linear_backward(*lin, fwd.z, d_scores);
    d_z = std::move(hg.d_input);
    g.head = std::move(hg.d_params);
  } else {
    auto hg = gaussian_backward(std::get<GaussianHeadParams>(model.head), fwd.z, d_scores);
    d_z = std::move(hg.d_input);
    g.head = std::move(hg.d_params);
  }
  g.backbone = mlp_backward(model.backbone, fwd.cache, d_z).d_params;
  return g;
}

}  // namespace detail

/// Mean in-branch loss over `in_batch` plus mean outlier loss over
/// `out_batch`, under `criterion` (lambda already scaled). An empty outlier
/// batch contributes nothing.
inline BatchResult batch_loss_and_gradient(const Model& model, const CriterionConfig& criterion,
                                           const LabeledSet& in_set, std::span<const std::size_t> in_batch,
                                           const LabeledSet& out_set, std::span<const std::size_t> out_batch) {
  BatchResult r{0.0, 0.0, model.zeros_like()};
  const double w_in = in_batch.empty() ? 0.0 : 1.0 / static_cast<double>(in_batch.size());
  for (std::size_t idx : in_batch) {
    const auto& x = in_set.features[idx];
    const auto fwd = mlp_forward(model.backbone, x);
    const auto s = model.head_scores(fwd.z);
    const LossReport loss = in_branch(criterion, s, static_cast<std::size_t>(in_set.labels[idx])).total();
    r.loss_in += w_in * loss.value;
    detail::accumulate(r.grads, detail::sample_gradient(model, fwd, loss.d_scores), w_in);
  }
  const double w_out = out_batch.empty() ? 0.0 : 1.0 / static_cast<double>(out_batch.size());
  for (std::size_t idx : out_batch) {
    const auto& x = out_set.features[idx];
    const auto fwd = mlp_forward(model.backbone, x);
    const auto s = model.head_scores(fwd.z);
    const LossReport loss = out_branch(criterion, s);
    r.loss_out += w_out * loss.value;
    detail::accumulate(r.grads, detail::sample_gradient(model, fwd, loss.d_scores), w_out);
  }
  return r;
}

/// Detector score for one input; higher means more in-distribution.
inline double score_input(const Model& model, std::span<const double> x, Scorer scorer) {
  const Vector s = model.scores(x);
  switch (scorer) {
    case Scorer::msp: {
      const Vector p = detail::softmax(s);
      return *std::max_element(p.begin(), p.end());
    }
    case Scorer::max_logit: return *std::max_element(s.begin(), s.end());
    case Scorer::energy_score: return detail::logsumexp(s);
    case Scorer::ice_conf:
      if (model.head_kind() != HeadKind::gaussian) throw IncompatibleScorer("ice_conf requires the gaussian head");
      return ice_confidence(s);
  }
  return 0.0;
}

inline std::vector<ScoreRecord> score_records(const Model& model, const LabeledSet& eval_in,
                                              const LabeledSet& eval_out, Scorer scorer) {
  if (scorer == Scorer::ice_conf && model.head_kind() != HeadKind::gaussian)
    throw IncompatibleScorer("ice_conf requires the gaussian head");
  std::vector<ScoreRecord> out;
  out.reserve(eval_in.size() + eval_out.size());
  for (const auto& x : eval_in.features) out.push_back({score_input(model, x, scorer), Domain::in});
  for (const auto& x : eval_out.features) out.push_back({score_input(model, x, scorer), Domain::out});
  return out;
}

inline MetricsReport evaluate(const Model& model, const LabeledSet& eval_in, const LabeledSet& eval_out,
                              Scorer scorer, Domain aupr_positive = Domain::out) {
  const auto records = score_records(model, eval_in, eval_out, scorer);
  return evaluate_records(records, aupr_positive);
}

inline double accuracy(const Model& model, const LabeledSet& data) {
  std::size_t correct = 0, total = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (data.domains[n] != Domain::in) continue;
    const Vector s = model.scores(data.features[n]);
    correct += static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()) == data.labels[n];
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss_in = 0.0;
  double loss_out = 0.0;
  double acc_in = 0.0;
  MetricsReport metrics;
  /// ICE confidence for the Gaussian head, maximum logit for the linear head.
  Histogram hist_in;
  Histogram hist_out;
  double mean_hist_value_in = 0.0;
  double mean_hist_value_out = 0.0;
};

/// One JSON object with keys epoch, loss_in, loss_out, acc_in, auroc, aupr,
/// fpr95, hist_bins (bin edges), hist_counts ({"in": [...], "out": [...]}).
inline nlohmann::json to_json(const EpochLog& log) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"epoch", log.epoch},
          {"loss_in", num(log.loss_in)},
          {"loss_out", num(log.loss_out)},
          {"acc_in", num(log.acc_in)},
          {"auroc", num(log.metrics.auroc)},
          {"aupr", num(log.metrics.aupr)},
          {"fpr95", num(log.metrics.fpr95)},
          {"hist_bins", log.hist_in.edges()},
          {"hist_counts", {{"in", log.hist_in.counts}, {"out", log.hist_out.counts}}}};
}

inline std::string to_jsonl(std::span<const EpochLog> logs) {
  std::string s;
  for (const auto& l : logs) s += to_json(l).dump() + "\n";
  return s;
}

namespace detail {

inline double histogram_value(const Model& model, std::span<const double> x) {
  const Vector s = model.scores(x);
  if (model.head_kind() == HeadKind::gaussian) return ice_confidence(s);
  return *std::max_element(s.begin(), s.end());
}

}  // namespace detail

inline EpochLog evaluate_epoch(const Model& model, const TrainConfig& cfg, const LabeledSet& eval_in,
                               const LabeledSet& eval_out) {
  EpochLog log;
  log.acc_in = accuracy(model, eval_in);
  log.metrics = evaluate(model, eval_in, eval_out, cfg.scorer, cfg.aupr_positive);
  std::vector<double> vin, vout;
  for (const auto& x : eval_in.features) vin.push_back(detail::histogram_value(model, x));
  for (const auto& x : eval_out.features) vout.push_back(detail::histogram_value(model, x));
  if (!all_finite(vin) || !all_finite(vout)) throw InvalidScore("evaluate_epoch: non-finite score");
  double lo = 0.0, hi = 1.0;
  if (model.head_kind() == HeadKind::linear) {
    lo = std::min(*std::min_element(vin.begin(), vin.end()), *std::min_element(vout.begin(), vout.end()));
    hi = std::max(*std::max_element(vin.begin(), vin.end()), *std::max_element(vout.begin(), vout.end()));
    if (!(hi > lo)) hi = lo + 1.0;
    if (!(hi > lo)) hi = std::nextafter(lo, HUGE_VAL);
  }
  log.hist_in = histogram(vin, cfg.hist_bins, lo, hi);
  log.hist_out = histogram(vout, cfg.hist_bins, lo, hi);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  log.mean_hist_value_in = mean(vin);
  log.mean_hist_value_out = mean(vout);
  return log;
}

struct TrainResult {
  Model model;
  std::vector<EpochLog> logs;
};

/// SGD with momentum (v <- mu v + g; p <- p - lr v) over backbone and head.
///
/// Each epoch visits the in-set once in a fresh seeded order, batch_in at a
/// time; outlier batches of batch_out are drawn from a separate seeded order
/// that is reshuffled whenever it runs out. The outlier weight is
/// lambda * gamma; at weight 0 the run is plain softmax cross-entropy.
inline TrainResult train(const TrainConfig& cfg, const LabeledSet& train_in, const LabeledSet& train_out,
                         const LabeledSet& eval_in, const LabeledSet& eval_out) {
  cfg.validate();
  if (train_in.count(Domain::in) == 0) throw Error("train: in-distribution training set is empty");
  if (eval_in.size() == 0 || eval_out.size() == 0) throw Error("train: evaluation sets must be nonempty");
  const double weight = cfg.outlier_weight();
  const CriterionConfig effective = weight == 0.0 ? CriterionConfig{CriterionKind::plain, 0.0}
                                                  : CriterionConfig{cfg.criterion.kind, weight};
  const bool use_outliers = effective.kind != CriterionKind::plain;
  if (use_outliers && train_out.size() == 0) throw Error("train: outlier training set is empty");

  TrainResult result{init_model(cfg, train_in.dim, &train_in), {}};
  Model& model = result.model;
  Model velocity = model.zeros_like();

  std::vector<std::size_t> in_order;
  for (std::size_t n = 0; n < train_in.size(); ++n)
    if (train_in.domains[n] == Domain::in) in_order.push_back(n);
  std::vector<std::size_t> out_order(train_out.size());
  for (std::size_t n = 0; n < out_order.size(); ++n) out_order[n] = n;
  Rng in_rng(derive_seed(cfg.seed, "train.in_order"));
  Rng out_rng(derive_seed(cfg.seed, "train.out_order"));
  std::size_t out_cursor = out_order.size();

  const std::size_t steps_per_epoch = (in_order.size() + cfg.batch_in - 1) / cfg.batch_in;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;
  std::vector<std::size_t> out_batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    in_rng.shuffle(in_order);
    double sum_in = 0.0, sum_out = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t begin = b * cfg.batch_in;
      const std::span<const std::size_t> in_batch(in_order.data() + begin,
                                                  std::min(cfg.batch_in, in_order.size() - begin));
      out_batch.clear();
      if (use_outliers) {
        while (out_batch.size() < cfg.batch_out) {
          if (out_cursor == out_order.size()) {
            out_rng.shuffle(out_order);
            out_cursor = 0;
          }
          out_batch.push_back(out_order[out_cursor++]);
        }
      }
      BatchResult br = batch_loss_and_gradient(model, effective, train_in, in_batch, train_out, out_batch);
      if (!std::isfinite(br.total())) throw NonFiniteLoss(step, "epoch " + std::to_string(epoch));
      const double lr = lr_at(cfg.schedule, cfg.initial_lr, step, total_steps);
      auto params = model.tensors();
      auto grads = br.grads.tensors();
      auto vel = velocity.tensors();
      for (std::size_t t = 0; t < params.size(); ++t)
        for (std::size_t k = 0; k < params[t].size(); ++k) {
          vel[t][k] = cfg.momentum * vel[t][k] + grads[t][k];
          params[t][k] -= lr * vel[t][k];
        }
      for (auto t : params)
        if (!all_finite(t)) throw NonFiniteLoss(step, "parameters became non-finite");
      sum_in += br.loss_in;
      sum_out += br.loss_out;
    }
    EpochLog log;
    try {
      log = evaluate_epoch(model, cfg, eval_in, eval_out);
    } catch (const InvalidScore&) {
      throw NonFiniteLoss(step, "evaluation scores became non-finite");
    }
    log.epoch = epoch;
    log.loss_in = sum_in / static_cast<double>(steps_per_epoch);
    log.loss_out = sum_out / static_cast<double>(steps_per_epoch);
    result.logs.push_back(std::move(log));
  }
  return result;
}

}  // namespace oelab
