// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "oelab/criteria.hpp"
#include "oelab/error.hpp"
#include "oelab/gda.hpp"
#include "oelab/io.hpp"
#include "oelab/trainer.hpp"

namespace oelab {

/// One documented configuration key.
struct ConfigKey {
  const char* section;
  const char* key;
  const char* default_value;
  const char* doc;
};

/// Every accepted key, in the order written to resolved configs.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"run", "seed", "0", "Top-level seed; every component seed is derived from it."},
      {"data", "mu", "3", "Class centers sit at (+mu, 0, ...) and (-mu, 0, ...)."},
      {"data", "zeta", "auto", "In/out density threshold; auto = identity-Gaussian density at zeta_radius."},
      {"data", "zeta_radius", "2.5", "Radius used when zeta = auto."},
      {"data", "dims", "2", "Input dimension of the synthetic data."},
      {"data", "n_train", "4000", "Synthetic draws for the training split (split into in and out by zeta)."},
      {"data", "n_eval", "1000", "In-distribution evaluation samples and held-out outliers, each."},
      {"data", "outlier_radius", "9", "Radius of the held-out outlier ring."},
      {"data", "outlier_clusters", "8", "Number of blobs on the held-out outlier ring."},
      {"data", "outlier_spread", "0.5", "Standard deviation of each held-out outlier blob."},
      {"data", "dir", "", "Directory with gen-data CSVs for train/export-features; empty = generate inline."},
      {"model", "head", "auto", "linear | gaussian | auto (gaussian for ice and ice_minus, else linear)."},
      {"model", "hidden", "64,64", "Hidden widths of the backbone."},
      {"model", "feature_dim", "8", "Backbone output (feature) dimension."},
      {"criterion", "kind", "ice", "plain | oe | energy | ice | ice_minus | bce."},
      {"criterion", "lambda", "auto", "Outlier weight; auto = oe 0.5, energy 0.1, ice 1.0, ice_minus 1.0, bce 1.0."},
      {"criterion", "gamma", "1", "Extra multiplier on lambda."},
      {"training", "preset", "desk", "desk | finetune | scratch; supplies schedule, lr and epochs when those are auto."},
      {"training", "schedule", "auto", "cosine | stairwise | auto."},
      {"training", "lr", "auto", "Initial learning rate; auto = preset value."},
      {"training", "epochs", "auto", "Epoch count; auto = preset value."},
      {"training", "batch_in", "128", "In-distribution batch size."},
      {"training", "batch_out", "256", "Outlier batch size."},
      {"training", "momentum", "0.9", "SGD momentum."},
      {"eval", "scorer", "auto", "msp | max_logit | energy_score | ice_conf | auto."},
      {"eval", "aupr_positive", "out", "Positive class for AUPR: in | out."},
      {"output", "dir", "out", "Output directory (overridden by --out)."},
      {"output", "hist_bins", "20", "Bins of the per-epoch confidence histograms."},
      {"shift", "steps", "100", "Gradient steps of the feature-shift simulation."},
      {"shift", "lr", "0.05", "Step size of the feature-shift simulation."},
      {"shift", "n_in", "200", "In-distribution features in the simulation bank."},
      {"shift", "n_out", "200", "Outlier features in the simulation bank."},
      {"sweep", "gammas", "1,3,5,7,9", "Gamma values of sweep-lambda."},
      {"sweep", "criteria", "oe,energy,ice", "Criteria of sweep-lambda."},
      {"sweep", "workers", "1", "Concurrent training runs in sweep-lambda."},
      {"demo", "geometry", "planted", "planted | sampled | centers."},
      {"demo", "class", "0", "Class whose logit and likelihood are compared."},
  };
  return schema;
}

/// Markdown table of every key with its default.
inline std::string config_reference() {
  std::string s = "# Configuration reference\n\n| section | key | default | meaning |\n|---|---|---|---|\n";
  for (const auto& k : config_schema())
    s += std::string("| ") + k.section + " | " + k.key + " | `" + k.default_value + "` | " + k.doc + " |\n";
  return s;
}

struct TrainingPreset {
  Schedule schedule;
  double lr;
  std::size_t epochs;
};

inline TrainingPreset training_preset(std::string_view name) {
  if (name == "desk") return {Schedule::cosine, 0.005, 30};
  if (name == "finetune") return {Schedule::cosine, 0.01, 10};
  if (name == "scratch") return {Schedule::stairwise, 0.1, 100};
  throw ConfigError("training.preset: unknown preset '" + std::string(name) + "'");
}

/// Fully resolved experiment configuration.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  double mu = 3.0;
  double zeta = 0.0;
  double zeta_radius = 2.5;
  std::size_t dims = 2;
  std::size_t n_train = 4000;
  std::size_t n_eval = 1000;
  double outlier_radius = 9.0;
  std::size_t outlier_clusters = 8;
  double outlier_spread = 0.5;
  std::string data_dir;

  TrainConfig train;
  std::vector<double> sweep_gammas;
  std::vector<CriterionKind> sweep_criteria;
  std::size_t sweep_workers = 1;

  std::string output_dir = "out";
  std::size_t shift_steps = 100;
  double shift_lr = 0.05;
  std::size_t shift_n_in = 200;
  std::size_t shift_n_out = 200;

  std::string demo_geometry = "planted";
  std::size_t demo_class = 0;

  /// Raw key values after defaults, as written to resolved configs.
  std::vector<std::pair<std::string, std::string>> resolved;

  std::string value(std::string_view dotted) const {
    for (const auto& [k, v] : resolved)
      if (k == dotted) return v;
    throw ConfigError("no such key " + std::string(dotted));
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T, typename Parse>
T config_value(const std::string& name, const std::string& raw, Parse&& parse) {
  try {
    return parse(raw);
  } catch (const std::exception& e) {
    throw ConfigError(name + ": invalid value '" + raw + "' (" + e.what() + ")");
  }
}

inline double to_double(const std::string& s) {
  const double v = io::parse_double(s);
  if (!std::isfinite(v)) throw Error("must be finite");
  return v;
}

inline std::size_t to_count(const std::string& s) {
  std::size_t pos = 0;
  if (s.empty() || s[0] == '-') throw Error("must be a non-negative integer");
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw Error("must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Parses an INI document (sections [run], [data], ...). Unknown sections or
/// keys are rejected; missing keys take their documented defaults.
inline ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      bool known = false;
      for (const auto& k : config_schema()) known |= section == k.section && key == k.key;
      if (!known) throw ConfigError("config: unknown key " + section + "." + key);
    }
  }

  ExperimentConfig c;
  auto raw = [&](const ConfigKey& k) {
    const auto v = tree.get_optional<std::string>(pt::ptree::path_type(std::string(k.section) + "." + k.key, '.'));
    return v ? detail::trim(*v) : std::string(k.default_value);
  };
  for (const auto& k : config_schema()) c.resolved.emplace_back(std::string(k.section) + "." + k.key, raw(k));
  auto get = [&](const char* name) { return c.value(name); };
  using detail::config_value;
  using detail::to_count;
  using detail::to_double;

  c.seed = config_value<std::uint64_t>("run.seed", get("run.seed"), [](const std::string& s) {
    return static_cast<std::uint64_t>(detail::to_count(s));
  });
  c.mu = config_value<double>("data.mu", get("data.mu"), to_double);
  c.zeta_radius = config_value<double>("data.zeta_radius", get("data.zeta_radius"), to_double);
  c.dims = config_value<std::size_t>("data.dims", get("data.dims"), to_count);
  if (c.dims < 2) throw ConfigError("data.dims: must be at least 2");
  c.zeta = get("data.zeta") == "auto" ? standard_density_at_radius(c.zeta_radius, c.dims)
                                      : config_value<double>("data.zeta", get("data.zeta"), to_double);
  c.n_train = config_value<std::size_t>("data.n_train", get("data.n_train"), to_count);
  c.n_eval = config_value<std::size_t>("data.n_eval", get("data.n_eval"), to_count);
  c.outlier_radius = config_value<double>("data.outlier_radius", get("data.outlier_radius"), to_double);
  c.outlier_clusters = config_value<std::size_t>("data.outlier_clusters", get("data.outlier_clusters"), to_count);
  c.outlier_spread = config_value<double>("data.outlier_spread", get("data.outlier_spread"), to_double);
  c.data_dir = get("data.dir");

  TrainConfig& t = c.train;
  t.criterion.kind = config_value<CriterionKind>("criterion.kind", get("criterion.kind"),
                                                 [](const std::string& s) { return parse_criterion(s); });
  t.criterion.lambda = get("criterion.lambda") == "auto"
                           ? default_lambda(t.criterion.kind)
                           : config_value<double>("criterion.lambda", get("criterion.lambda"), to_double);
  t.gamma = config_value<double>("criterion.gamma", get("criterion.gamma"), to_double);

  const std::string head = get("model.head");
  if (head == "auto")
    t.head = needs_gaussian_head(t.criterion.kind) ? HeadKind::gaussian : HeadKind::linear;
  else if (head == "linear")
    t.head = HeadKind::linear;
  else if (head == "gaussian")
    t.head = HeadKind::gaussian;
  else
    throw ConfigError("model.head: invalid value '" + head + "'");
  t.hidden.clear();
  for (const auto& w : io::split(get("model.hidden"), ','))
    if (!detail::trim(w).empty()) t.hidden.push_back(config_value<std::size_t>("model.hidden", detail::trim(w), to_count));
  for (auto w : t.hidden)
    if (w == 0) throw ConfigError("model.hidden: widths must be positive");
  t.feature_dim = config_value<std::size_t>("model.feature_dim", get("model.feature_dim"), to_count);
  if (t.feature_dim == 0) throw ConfigError("model.feature_dim: must be positive");

  const TrainingPreset preset = training_preset(get("training.preset"));
  t.schedule = get("training.schedule") == "auto"
                   ? preset.schedule
                   : config_value<Schedule>("training.schedule", get("training.schedule"),
                                            [](const std::string& s) { return parse_schedule(s); });
  t.initial_lr = get("training.lr") == "auto" ? preset.lr
                                              : config_value<double>("training.lr", get("training.lr"), to_double);
  t.epochs = get("training.epochs") == "auto"
                 ? preset.epochs
                 : config_value<std::size_t>("training.epochs", get("training.epochs"), to_count);
  t.batch_in = config_value<std::size_t>("training.batch_in", get("training.batch_in"), to_count);
  t.batch_out = config_value<std::size_t>("training.batch_out", get("training.batch_out"), to_count);
  t.momentum = config_value<double>("training.momentum", get("training.momentum"), to_double);
  t.scorer = get("eval.scorer") == "auto" ? default_scorer(t.criterion.kind)
                                          : config_value<Scorer>("eval.scorer", get("eval.scorer"),
                                                                 [](const std::string& s) { return parse_scorer(s); });
  t.aupr_positive = config_value<Domain>("eval.aupr_positive", get("eval.aupr_positive"),
                                         [](const std::string& s) { return parse_domain(s); });
  t.hist_bins = config_value<std::size_t>("output.hist_bins", get("output.hist_bins"), to_count);
  if (t.hist_bins == 0) throw ConfigError("output.hist_bins: must be positive");
  t.seed = derive_seed(c.seed, "train");
  try {
    t.validate();
  } catch (const IncompatibleScorer& e) {
    throw ConfigError(std::string("eval.scorer: ") + e.what());
  }

  c.output_dir = get("output.dir");
  c.shift_steps = config_value<std::size_t>("shift.steps", get("shift.steps"), to_count);
  if (c.shift_steps == 0) throw ConfigError("shift.steps: must be at least 1");
  c.shift_lr = config_value<double>("shift.lr", get("shift.lr"), to_double);
  if (c.shift_lr < 0.0) throw ConfigError("shift.lr: must be non-negative");
  c.shift_n_in = config_value<std::size_t>("shift.n_in", get("shift.n_in"), to_count);
  c.shift_n_out = config_value<std::size_t>("shift.n_out", get("shift.n_out"), to_count);

  for (const auto& g : io::split(get("sweep.gammas"), ','))
    if (!detail::trim(g).empty()) c.sweep_gammas.push_back(config_value<double>("sweep.gammas", detail::trim(g), to_double));
  for (const auto& k : io::split(get("sweep.criteria"), ','))
    if (!detail::trim(k).empty())
      c.sweep_criteria.push_back(config_value<CriterionKind>(
          "sweep.criteria", detail::trim(k), [](const std::string& s) { return parse_criterion(s); }));
  c.sweep_workers = config_value<std::size_t>("sweep.workers", get("sweep.workers"), to_count);
  if (c.sweep_workers == 0) throw ConfigError("sweep.workers: must be positive");

  c.demo_geometry = get("demo.geometry");
  if (c.demo_geometry != "planted" && c.demo_geometry != "sampled" && c.demo_geometry != "centers")
    throw ConfigError("demo.geometry: invalid value '" + c.demo_geometry + "'");
  c.demo_class = config_value<std::size_t>("demo.class", get("demo.class"), to_count);
  if (c.demo_class > 1) throw ConfigError("demo.class: must be 0 or 1");

  if (!(c.mu > 0.0)) throw ConfigError("data.mu: must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path));
}

/// INI text with every key set to its resolved value; parsing it back gives
/// the same configuration.
inline std::string resolved_config_text(const ExperimentConfig& c) {
  std::string s;
  std::string section;
  for (const auto& [dotted, value] : c.resolved) {
    const auto dot = dotted.find('.');
    const std::string sec = dotted.substr(0, dot);
    if (sec != section) {
      s += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    s += dotted.substr(dot + 1) + " = " + value + "\n";
  }
  return s;
}

/// Replaces one resolved key (used for command-line overrides) and re-parses.
inline ExperimentConfig with_override(const ExperimentConfig& c, const std::string& dotted, const std::string& value) {
  ExperimentConfig copy = c;
  bool found = false;
  for (auto& [k, v] : copy.resolved)
    if (k == dotted) {
      v = value;
      found = true;
    }
  if (!found) throw ConfigError("no such key " + dotted);
  return parse_config(resolved_config_text(copy));
}

}  // namespace oelab
