// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oelab/checkpoint.hpp"
#include "oelab/config.hpp"
#include "oelab/gda.hpp"
#include "oelab/io.hpp"
#include "oelab/metrics.hpp"
#include "oelab/shiftsim.hpp"
#include "oelab/trainer.hpp"

namespace oelab::cmd {

namespace fs = std::filesystem;

/// Process exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kConfigError = 2, kNonFinite = 3, kIoError = 4 };

/// The four data splits used by training and evaluation.
struct DataSplits {
  LabeledSet train_in;
  LabeledSet train_out;
  LabeledSet eval_in;
  LabeledSet eval_out;
};

/// Seeds: data.train, data.eval_in and data.eval_out are derived from run.seed.
inline DataSplits generate_data(const ExperimentConfig& c) {
  const LabeledSet train = sample_synthetic(c.mu, c.zeta, c.n_train, derive_seed(c.seed, "data.train"), c.dims);
  return {train.only(Domain::in), train.only(Domain::out),
          sample_synthetic_counts(c.mu, c.zeta, c.n_eval, 0, derive_seed(c.seed, "data.eval_in"), c.dims),
          sample_outlier_ring(c.outlier_radius, c.outlier_clusters, c.outlier_spread, c.n_eval,
                              derive_seed(c.seed, "data.eval_out"), c.dims)};
}

inline DataSplits load_or_generate_data(const ExperimentConfig& c) {
  if (c.data_dir.empty()) return generate_data(c);
  const fs::path dir(c.data_dir);
  auto load = [&](const char* name) {
    try {
      return labeled_set_from_csv(io::read_file(dir / name));
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      throw IoError((dir / name).string() + ": " + e.what());
    }
  };
  return {load("train_in.csv"), load("train_out.csv"), load("eval_in.csv"), load("eval_out.csv")};
}

/// Writes config.resolved.ini (deterministic) and meta.json (wall-clock
/// timestamp; the only non-reproducible output).
inline void write_sidecars(const fs::path& out, const ExperimentConfig& c, std::string_view command) {
  io::write_file(out / "config.resolved.ini", resolved_config_text(c));
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  const nlohmann::json meta = {{"command", command}, {"timestamp", stamp}, {"seed", c.seed}};
  io::write_file(out / "meta.json", meta.dump(2) + "\n");
}

inline void gen_data(const ExperimentConfig& c, const fs::path& out) {
  const DataSplits d = generate_data(c);
  io::write_file(out / "train_in.csv", to_csv(d.train_in));
  io::write_file(out / "train_out.csv", to_csv(d.train_out));
  io::write_file(out / "eval_in.csv", to_csv(d.eval_in));
  io::write_file(out / "eval_out.csv", to_csv(d.eval_out));
  write_sidecars(out, c, "gen-data");
}

/// The simulation bank: shift.n_in in-samples and shift.n_out outliers drawn
/// with seed derive(run.seed, "shift.bank"); the reference model is the GDA
/// fit of its in-samples.
struct ShiftSetup {
  FeatureBank bank;
  GdaModel model;
};

inline ShiftSetup shift_setup(const ExperimentConfig& c) {
  FeatureBank bank =
      sample_synthetic_counts(c.mu, c.zeta, c.shift_n_in, c.shift_n_out, derive_seed(c.seed, "shift.bank"), c.dims);
  GdaModel model = fit_gda(bank, 2);
  return {std::move(bank), std::move(model)};
}

inline ShiftTrajectory simulate_shift(const ExperimentConfig& c, const fs::path& out) {
  const ShiftSetup s = shift_setup(c);
  const CriterionConfig crit{c.train.criterion.kind, c.train.criterion.lambda * c.train.gamma};
  ShiftTrajectory traj = run_shift_sim(crit, s.bank, s.model, {c.shift_steps, c.shift_lr, c.zeta});
  io::write_file(out / "trajectory.csv", trajectory_csv(traj));
  io::write_file(out / "stats.csv", stats_csv(traj));
  write_sidecars(out, c, "simulate-shift");
  return traj;
}

/// Data and reference model for the false-likelihood demonstration.
///
/// planted: true model N((+-mu, 0), I); in-samples A = mu_0 + (0, 1.5) and
///   the two centers; one outlier B = mu_0 + 5 * w_0 / |w_0| per class.
/// sampled: synthetic draws with the fitted GDA model.
/// centers: only the two class centers; no outliers.
inline std::pair<GdaModel, LabeledSet> demo_geometry(const ExperimentConfig& c) {
  const std::size_t d = c.dims;
  std::vector<Vector> means(2, Vector(d, 0.0));
  means[0][0] = c.mu;
  means[1][0] = -c.mu;
  GdaModel truth(means, Matrix::identity(d));
  LabeledSet data{d, {}, {}, {}};
  if (c.demo_geometry == "sampled") {
    data = sample_synthetic(c.mu, c.zeta, c.n_train, derive_seed(c.seed, "demo.data"), d);
    return {fit_gda(data, 2), std::move(data)};
  }
  if (c.demo_geometry == "centers") {
    data.add(means[0], Domain::in, 0);
    data.add(means[1], Domain::in, 1);
    return {std::move(truth), std::move(data)};
  }
  const auto disc = closed_form_discriminant(truth);
  for (int i = 0; i < 2; ++i) {
    Vector a = means[static_cast<std::size_t>(i)];
    a[1] += 1.5;
    data.add(std::move(a), Domain::in, i);
  }
  for (int i = 0; i < 2; ++i) data.add(means[static_cast<std::size_t>(i)], Domain::in, i);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto w = disc.weights.row(i);
    const double norm = std::sqrt(squared_norm(w));
    Vector b = means[i];
    for (std::size_t j = 0; j < d; ++j) b[j] += 5.0 * w[j] / norm;
    data.add(std::move(b), Domain::out);
  }
  return {std::move(truth), std::move(data)};
}

inline nlohmann::json demo_false_likelihood(const ExperimentConfig& c, const fs::path& out) {
  const auto [model, data] = demo_geometry(c);
  const std::size_t cls = c.demo_class;
  const auto pair = find_false_likelihood_pair(model, data, cls);
  nlohmann::json report;
  report["geometry"] = c.demo_geometry;
  report["class"] = cls;
  if (!pair) {
    report["result"] = "none";
  } else {
    const auto disc = closed_form_discriminant(model);
    auto describe = [&](std::size_t idx) {
      const auto& x = data.features[idx];
      return nlohmann::json{{"index", idx},
                            {"domain", to_string(data.domains[idx])},
                            {"coords", x},
                            {"logit", linear_forward(disc, x)[cls]},
                            {"log_likelihood", class_log_likelihood(model, x, cls)},
                            {"likelihood", class_likelihood(model, x, cls)}};
    };
    const auto a = describe(pair->in_index);
    const auto b = describe(pair->out_index);
    report["result"] = "found";
    report["A"] = a;
    report["B"] = b;
    report["checks"] = {{"logit_B_gt_logit_A", b["logit"].get<double>() > a["logit"].get<double>()},
                        {"likelihood_B_lt_likelihood_A",
                         b["log_likelihood"].get<double>() < a["log_likelihood"].get<double>()}};
  }
  io::write_file(out / "false_likelihood.json", report.dump(2) + "\n");
  write_sidecars(out, c, "demo-false-likelihood");
  return report;
}

/// Header criterion,gamma,lambda,scorer,auroc,aupr,fpr95,acc_in.
inline std::string metrics_header() { return "criterion,gamma,lambda,scorer,auroc,aupr,fpr95,acc_in\n"; }

inline std::string metrics_row(const TrainConfig& t, const std::optional<EpochLog>& last) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> vals{last ? last->metrics.auroc : nan, last ? last->metrics.aupr : nan,
                                 last ? last->metrics.fpr95 : nan, last ? last->acc_in : nan};
  return std::string(to_string(t.criterion.kind)) + "," + io::format_double(t.gamma) + "," +
         io::format_double(t.criterion.lambda) + "," + std::string(to_string(t.scorer)) + "," + io::join_doubles(vals) +
         "\n";
}

struct TrainOutcome {
  std::optional<TrainResult> result;
  std::optional<std::size_t> nonfinite_step;
};

/// Writes epochs.jsonl, metrics.csv, scores.csv and checkpoint.txt. A
/// non-finite loss is reported in the outcome (and in metrics.csv as NaN)
/// instead of being thrown.
inline TrainOutcome train(const ExperimentConfig& c, const fs::path& out) {
  const DataSplits d = load_or_generate_data(c);
  TrainOutcome outcome;
  try {
    outcome.result = oelab::train(c.train, d.train_in, d.train_out, d.eval_in, d.eval_out);
  } catch (const NonFiniteLoss& e) {
    outcome.nonfinite_step = e.step();
  }
  if (outcome.result) {
    const auto& r = *outcome.result;
    io::write_file(out / "epochs.jsonl", to_jsonl(r.logs));
    io::write_file(out / "metrics.csv", metrics_header() + metrics_row(c.train, r.logs.back()));
    io::write_file(out / "scores.csv", to_csv(score_records(r.model, d.eval_in, d.eval_out, c.train.scorer)));
    io::write_file(out / "checkpoint.txt", checkpoint_text(r.model));
  } else {
    io::write_file(out / "epochs.jsonl", "");
    io::write_file(out / "metrics.csv", metrics_header() + metrics_row(c.train, std::nullopt));
    io::write_file(out / "status.json",
                   nlohmann::json{{"status", "non_finite_loss"}, {"step", *outcome.nonfinite_step}}.dump(2) + "\n");
  }
  write_sidecars(out, c, "train");
  return outcome;
}

struct SweepRow {
  CriterionKind criterion;
  double gamma;
  double lambda;
  std::optional<EpochLog> last;  // empty when training hit a non-finite loss
};

/// One training run per (criterion, gamma). Each run uses the criterion's
/// default lambda, head and scorer, scaled by gamma; everything else comes
/// from the config. Runs are independent and may execute on `workers` threads.
inline std::vector<SweepRow> sweep_lambda(const ExperimentConfig& c, const std::vector<double>& gammas,
                                          const std::vector<CriterionKind>& criteria, std::size_t workers) {
  if (gammas.empty()) throw ConfigError("sweep.gammas: need at least one gamma");
  if (criteria.empty()) throw ConfigError("sweep.criteria: need at least one criterion");
  const DataSplits d = load_or_generate_data(c);
  std::vector<SweepRow> rows;
  std::vector<TrainConfig> configs;
  for (auto kind : criteria)
    for (double g : gammas) {
      TrainConfig t = c.train;
      t.criterion = CriterionConfig::with_default(kind);
      t.gamma = g;
      t.head = needs_gaussian_head(kind) ? HeadKind::gaussian : HeadKind::linear;
      t.scorer = default_scorer(kind);
      configs.push_back(t);
      rows.push_back({kind, g, t.criterion.lambda, std::nullopt});
    }
  auto run = [&](std::size_t i) -> std::optional<EpochLog> {
    try {
      return oelab::train(configs[i], d.train_in, d.train_out, d.eval_in, d.eval_out).logs.back();
    } catch (const NonFiniteLoss&) {
      return std::nullopt;
    }
  };
  for (std::size_t begin = 0; begin < configs.size(); begin += workers) {
    std::vector<std::future<std::optional<EpochLog>>> batch;
    const std::size_t end = std::min(configs.size(), begin + workers);
    for (std::size_t i = begin; i < end; ++i) batch.push_back(std::async(std::launch::async, run, i));
    for (std::size_t i = begin; i < end; ++i) rows[i].last = batch[i - begin].get();
  }
  return rows;
}

/// Long form: criterion,gamma,lambda,auroc,aupr,fpr95,acc_in; NaN cells for
/// runs that stopped on a non-finite loss.
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::string s = "criterion,gamma,lambda,auroc,aupr,fpr95,acc_in\n";
  for (const auto& r : rows) {
    const std::vector<double> vals{r.gamma, r.lambda, r.last ? r.last->metrics.auroc : nan,
                                   r.last ? r.last->metrics.aupr : nan, r.last ? r.last->metrics.fpr95 : nan,
                                   r.last ? r.last->acc_in : nan};
    s += std::string(to_string(r.criterion)) + "," + io::join_doubles(vals) + "\n";
  }
  return s;
}

/// Wide form: one row per (metric, criterion), one column per gamma, metrics
/// in the order AUPR, AUROC, FPR95, In-dist.
inline std::string sweep_table_csv(const std::vector<SweepRow>& rows, const std::vector<double>& gammas,
                                   const std::vector<CriterionKind>& criteria) {
  std::string s = "metric,method";
  for (double g : gammas) s += ",gamma=" + io::format_double(g);
  s += "\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const char* names[] = {"AUPR", "AUROC", "FPR95", "In-dist"};
  for (int m = 0; m < 4; ++m)
    for (auto kind : criteria) {
      s += std::string(names[m]) + "," + std::string(to_string(kind));
      for (double g : gammas) {
        double v = nan;
        for (const auto& r : rows)
          if (r.criterion == kind && r.gamma == g && r.last) {
            const auto& l = *r.last;
            v = m == 0 ? l.metrics.aupr : m == 1 ? l.metrics.auroc : m == 2 ? l.metrics.fpr95 : l.acc_in;
          }
        s += "," + io::format_double(v);
      }
      s += "\n";
    }
  return s;
}

inline std::vector<SweepRow> sweep(const ExperimentConfig& c, const std::vector<double>& gammas,
                                   const fs::path& out) {
  auto rows = sweep_lambda(c, gammas, c.sweep_criteria, c.sweep_workers);
  io::write_file(out / "sweep.csv", sweep_csv(rows));
  io::write_file(out / "sweep_table.csv", sweep_table_csv(rows, gammas, c.sweep_criteria));
  write_sidecars(out, c, "sweep-lambda");
  return rows;
}

/// Header idx,domain,z0,...,z{d-1}; eval in-samples first, then eval outliers.
inline std::size_t export_features(const ExperimentConfig& c, const fs::path& checkpoint, const fs::path& out) {
  const Model model = model_from_checkpoint(io::read_file(checkpoint));
  const DataSplits d = load_or_generate_data(c);
  detail::require_dims(d.eval_in.dim, model.backbone.in_dim(), "export-features: checkpoint input");
  std::string s = "idx,domain";
  for (std::size_t j = 0; j < model.backbone.out_dim(); ++j) s += ",z" + std::to_string(j);
  s += "\n";
  std::size_t idx = 0;
  for (const LabeledSet* set : {&d.eval_in, &d.eval_out})
    for (std::size_t n = 0; n < set->size(); ++n)
      s += std::to_string(idx++) + "," + to_string(set->domains[n]) + "," +
           io::join_doubles(model.features(set->features[n])) + "\n";
  io::write_file(out / "features.csv", s);
  write_sidecars(out, c, "export-features");
  return idx;
}

}  // namespace oelab::cmd
