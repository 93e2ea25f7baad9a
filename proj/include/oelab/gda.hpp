// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "oelab/error.hpp"
#include "oelab/heads.hpp"
#include "oelab/io.hpp"
#include "oelab/linalg.hpp"
#include "oelab/rng.hpp"

namespace oelab {

enum class Domain { in, out };

inline const char* to_string(Domain d) { return d == Domain::in ? "in" : "out"; }

inline Domain parse_domain(std::string_view s) {
  if (s == "in") return Domain::in;
  if (s == "out") return Domain::out;
  throw Error("unknown domain '" + std::string(s) + "'");
}

/// Parallel arrays of feature vectors, class labels and domain tags.
/// Labels are meaningful only for in-domain rows; out-domain rows carry -1.
struct LabeledSet {
  std::size_t dim = 0;
  std::vector<Vector> features;
  std::vector<int> labels;
  std::vector<Domain> domains;

  std::size_t size() const noexcept { return features.size(); }

  void add(Vector x, Domain d, int label = -1) {
    detail::require_dims(x.size(), dim, "LabeledSet::add");
    features.push_back(std::move(x));
    labels.push_back(d == Domain::in ? label : -1);
    domains.push_back(d);
  }

  LabeledSet only(Domain d) const {
    LabeledSet out{dim, {}, {}, {}};
    for (std::size_t i = 0; i < size(); ++i)
      if (domains[i] == d) out.add(features[i], d, labels[i]);
    return out;
  }

  std::size_t count(Domain d) const {
    std::size_t n = 0;
    for (auto x : domains) n += (x == d);
    return n;
  }

  bool operator==(const LabeledSet&) const = default;
};

/// Class-conditional Gaussians N(mu_i, Sigma) with one tied covariance.
class GdaModel {
 public:
  GdaModel(std::vector<Vector> means, Matrix tied_cov)
      : means_(std::move(means)), tied_cov_(std::move(tied_cov)) {
    if (means_.size() < 2) throw Error("GdaModel: need at least two classes");
    const std::size_t d = tied_cov_.rows();
    if (d == 0) throw Error("GdaModel: dimension must be positive");
    for (const auto& m : means_) detail::require_dims(m.size(), d, "GdaModel mean");
    try {
      chol_ = cholesky(tied_cov_);
    } catch (const NotPositiveDefinite& e) {
      throw DegenerateCovariance(std::string("GdaModel: ") + e.what());
    }
  }

  std::size_t classes() const noexcept { return means_.size(); }
  std::size_t dim() const noexcept { return tied_cov_.rows(); }
  const std::vector<Vector>& means() const noexcept { return means_; }
  const Vector& mean(std::size_t i) const { return means_.at(i); }
  const Matrix& tied_cov() const noexcept { return tied_cov_; }
  const LowerTriangular& chol() const noexcept { return chol_; }

 private:
  std::vector<Vector> means_;
  Matrix tied_cov_;
  LowerTriangular chol_;
};

/// Per-class means and the pooled maximum-likelihood covariance (divided by N).
///
/// Only in-domain rows are used. num_classes = 0 infers K from the largest label.
inline GdaModel fit_gda(const LabeledSet& data, std::size_t num_classes = 0) {
  const std::size_t d = data.dim;
  std::size_t k = num_classes;
  if (k == 0) {
    for (std::size_t n = 0; n < data.size(); ++n)
      if (data.domains[n] == Domain::in) k = std::max(k, static_cast<std::size_t>(data.labels[n]) + 1);
  }
  std::vector<Vector> means(k, Vector(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  std::size_t total = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (data.domains[n] != Domain::in) continue;
    const auto y = static_cast<std::size_t>(data.labels[n]);
    if (data.labels[n] < 0 || y >= k) throw Error("fit_gda: label out of range");
    for (std::size_t j = 0; j < d; ++j) means[y][j] += data.features[n][j];
    ++counts[y];
    ++total;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i] == 0) throw EmptyClass("fit_gda: class " + std::to_string(i) + " has no samples");
    for (double& v : means[i]) v /= static_cast<double>(counts[i]);
  }
  Matrix cov(d, d);
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (data.domains[n] != Domain::in) continue;
    const Vector u = subtract(data.features[n], means[static_cast<std::size_t>(data.labels[n])]);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += u[a] * u[b];
  }
  for (double& v : cov.data()) v /= static_cast<double>(total);
  return GdaModel(std::move(means), std::move(cov));
}

/// w_i = Sigma^{-1} mu_i, b_i = -1/2 mu_i^T Sigma^{-1} mu_i.
inline LinearHeadParams closed_form_discriminant(const GdaModel& model) {
  LinearHeadParams p{Matrix(model.classes(), model.dim()), Vector(model.classes(), 0.0)};
  for (std::size_t i = 0; i < model.classes(); ++i) {
    const Vector w = spd_solve(model.chol(), model.mean(i));
    std::copy(w.begin(), w.end(), p.weights.row(i).begin());
    p.bias[i] = -0.5 * dot(model.mean(i), w);
  }
  return p;
}

/// Gaussian head with m_i = mu_i and L = chol(Sigma).
inline GaussianHeadParams gaussian_head_from(const GdaModel& model) {
  return GaussianHeadParams::from_factor(model.means(), model.chol());
}

/// log N(z; mu_i, Sigma).
inline double class_log_likelihood(const GdaModel& model, std::span<const double> z, std::size_t i) {
  if (i >= model.classes()) throw Error("class_likelihood: class index out of range");
  const double d = static_cast<double>(model.dim());
  double log_det = 0.0;
  for (std::size_t j = 0; j < model.dim(); ++j) log_det += 2.0 * std::log(model.chol()(j, j));
  const double q = spd_quadform(model.chol(), subtract(z, model.mean(i)));
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det + q);
}

inline double class_likelihood(const GdaModel& model, std::span<const double> z, std::size_t i) {
  return std::exp(class_log_likelihood(model, z, i));
}

/// Class posterior under uniform priors: softmax of the closed-form discriminant.
inline Vector posterior(const GdaModel& model, std::span<const double> z) {
  const auto disc = closed_form_discriminant(model);
  Vector s = linear_forward(disc, z);
  double mx = s[0];
  for (double v : s) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : s) sum += (v = std::exp(v - mx));
  for (double& v : s) v /= sum;
  return s;
}

/// Peak density of an identity-covariance Gaussian in `dims` dimensions.
inline double standard_density_max(std::size_t dims) {
  return std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(dims));
}

/// Identity-covariance Gaussian density at distance `radius` from its mean.
inline double standard_density_at_radius(double radius, std::size_t dims) {
  return standard_density_max(dims) * std::exp(-0.5 * radius * radius);
}

/// Stream of two-class synthetic draws. Draws alternate between
/// N((mu,0,..), I) (label 0) and N((-mu,0,..), I) (label 1). A draw is
/// in-domain, keeping its drawing class as label, when the larger of the two
/// class densities exceeds zeta; otherwise it is an outlier.
class SyntheticSampler {
 public:
  SyntheticSampler(double mu, double zeta, std::uint64_t seed, std::size_t dims = 2)
      : mu_(mu), zeta_(zeta), dims_(dims), peak_(standard_density_max(dims)), rng_(seed) {
    if (!(mu > 0.0)) throw Error("sample_synthetic: mu must be positive");
    if (dims < 1) throw Error("sample_synthetic: dims must be positive");
    if (!(zeta > 0.0) || zeta >= peak_)
      throw InvalidThreshold("sample_synthetic: zeta must lie in (0, " + io::format_double(peak_) + ")");
  }

  std::size_t dims() const noexcept { return dims_; }

  struct Draw {
    Vector x;
    Domain domain;
    int label;
  };

  Draw next() {
    const int label = static_cast<int>(drawn_++ % 2);
    Vector x(dims_);
    for (std::size_t j = 0; j < dims_; ++j) x[j] = rng_.normal();
    x[0] += label == 0 ? mu_ : -mu_;
    const double density = peak_ * std::exp(-0.5 * std::min(sq_dist(x, mu_), sq_dist(x, -mu_)));
    if (density > zeta_) return {std::move(x), Domain::in, label};
    return {std::move(x), Domain::out, -1};
  }

 private:
  double sq_dist(const Vector& x, double center) const {
    double r = 0.0;
    for (std::size_t j = 0; j < dims_; ++j) {
      const double c = j == 0 ? center : 0.0;
      r += (x[j] - c) * (x[j] - c);
    }
    return r;
  }

  double mu_, zeta_;
  std::size_t dims_;
  double peak_;
  Rng rng_;
  std::size_t drawn_ = 0;
};

/// n consecutive draws of SyntheticSampler.
inline LabeledSet sample_synthetic(double mu, double zeta, std::size_t n, std::uint64_t seed, std::size_t dims = 2) {
  SyntheticSampler sampler(mu, zeta, seed, dims);
  LabeledSet out{dims, {}, {}, {}};
  for (std::size_t s = 0; s < n; ++s) {
    auto d = sampler.next();
    out.add(std::move(d.x), d.domain, d.label);
  }
  return out;
}

/// Keeps drawing until `n_in` in-samples and `n_out` outliers are collected;
/// surplus draws of either kind are discarded. In-samples come first.
inline LabeledSet sample_synthetic_counts(double mu, double zeta, std::size_t n_in, std::size_t n_out,
                                          std::uint64_t seed, std::size_t dims = 2) {
  SyntheticSampler sampler(mu, zeta, seed, dims);
  LabeledSet ins{dims, {}, {}, {}}, outs{dims, {}, {}, {}};
  while (ins.size() < n_in || outs.size() < n_out) {
    auto d = sampler.next();
    LabeledSet& dst = d.domain == Domain::in ? ins : outs;
    if (dst.size() < (d.domain == Domain::in ? n_in : n_out)) dst.add(std::move(d.x), d.domain, d.label);
  }
  for (std::size_t n = 0; n < outs.size(); ++n) ins.add(outs.features[n], Domain::out);
  return ins;
}

/// Held-out outlier family: `clusters` isotropic blobs (stddev `spread`)
/// evenly spaced on a circle of `radius` in the first two coordinates.
/// Extra coordinates, if any, are standard normal.
inline LabeledSet sample_outlier_ring(double radius, std::size_t clusters, double spread, std::size_t n,
                                      std::uint64_t seed, std::size_t dims = 2) {
  if (dims < 2) throw Error("sample_outlier_ring: needs at least two dimensions");
  if (clusters == 0) throw Error("sample_outlier_ring: clusters must be positive");
  Rng rng(seed);
  LabeledSet out{dims, {}, {}, {}};
  for (std::size_t s = 0; s < n; ++s) {
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(s % clusters) + 0.5) /
                         static_cast<double>(clusters);
    Vector x(dims);
    for (std::size_t j = 0; j < dims; ++j) x[j] = rng.normal();
    x[0] = radius * std::cos(angle) + spread * x[0];
    x[1] = radius * std::sin(angle) + spread * x[1];
    out.add(std::move(x), Domain::out);
  }
  return out;
}

/// CSV with header x0,...,x{d-1},label,domain; label is empty for out rows.
inline std::string to_csv(const LabeledSet& set) {
  std::string s;
  for (std::size_t j = 0; j < set.dim; ++j) s += "x" + std::to_string(j) + ",";
  s += "label,domain\n";
  for (std::size_t n = 0; n < set.size(); ++n) {
    s += io::join_doubles(set.features[n]);
    s += ',';
    if (set.domains[n] == Domain::in) s += std::to_string(set.labels[n]);
    s += ',';
    s += to_string(set.domains[n]);
    s += '\n';
  }
  return s;
}

inline LabeledSet labeled_set_from_csv(std::string_view text) {
  const auto rows = io::lines(text);
  if (rows.empty()) throw Error("labeled set CSV: missing header");
  const auto header = io::split(rows[0], ',');
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "domain")
    throw Error("labeled set CSV: header must end with label,domain");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "x" + std::to_string(j)) throw Error("labeled set CSV: bad column " + header[j]);
  LabeledSet set{d, {}, {}, {}};
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = io::split(rows[r], ',');
    if (cells.size() != d + 2) throw Error("labeled set CSV: row " + std::to_string(r) + " has wrong width");
    Vector x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = io::parse_double(cells[j]);
    const Domain dom = parse_domain(cells[d + 1]);
    set.add(std::move(x), dom, dom == Domain::in ? std::stoi(cells[d]) : -1);
  }
  return set;
}

}  // namespace oelab
