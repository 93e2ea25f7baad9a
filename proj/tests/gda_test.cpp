// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oelab/gda.hpp"
#include "oracles.hpp"

namespace oelab {
namespace {

LabeledSet four_points() {
  LabeledSet s{2, {}, {}, {}};
  s.add({0, 0}, Domain::in, 0);
  s.add({2, 0}, Domain::in, 0);
  s.add({0, 2}, Domain::in, 1);
  s.add({0, 4}, Domain::in, 1);
  return s;
}

GdaModel random_model(Rng& rng, std::size_t k, std::size_t d) {
  std::vector<Vector> means(k, Vector(d));
  for (auto& m : means)
    for (double& v : m) v = 2.0 * rng.normal();
  Matrix b(d, d);
  for (double& v : b.data()) v = rng.normal();
  Matrix cov = matmul(b, b.transpose());
  for (std::size_t i = 0; i < d; ++i) cov(i, i) += 0.5;
  return GdaModel(std::move(means), cov);
}

// Bayes rule from explicitly evaluated densities, uniform priors.
Vector bayes_posterior(const GdaModel& m, std::span<const double> z) {
  Vector p(m.classes());
  double sum = 0.0;
  for (std::size_t i = 0; i < m.classes(); ++i) sum += (p[i] = oracle::gaussian_density(z, m.mean(i), m.tied_cov()));
  for (double& v : p) v /= sum;
  return p;
}

TEST(FitGda, PooledMleCovariance) {
  const auto m = fit_gda(four_points());
  EXPECT_EQ(m.mean(0), (Vector{1, 0}));
  EXPECT_EQ(m.mean(1), (Vector{0, 3}));
  EXPECT_EQ(m.tied_cov(), Matrix(2, 2, {0.5, 0, 0, 0.5}));
}

TEST(FitGda, IgnoresOutliers) {
  auto s = four_points();
  s.add({100, -100}, Domain::out);
  const auto m = fit_gda(s);
  EXPECT_EQ(m.mean(0), (Vector{1, 0}));
  EXPECT_EQ(m.tied_cov(), Matrix(2, 2, {0.5, 0, 0, 0.5}));
}

TEST(FitGda, NoSpreadIsDegenerate) {
  LabeledSet s{2, {}, {}, {}};
  s.add({1, 0}, Domain::in, 0);
  s.add({-1, 0}, Domain::in, 1);
  EXPECT_THROW(fit_gda(s), DegenerateCovariance);
}

TEST(FitGda, EmptyClass) {
  auto s = four_points();
  EXPECT_THROW(fit_gda(s, 3), EmptyClass);
}

TEST(FitGda, DuplicationInvariant) {
  const auto s = four_points();
  auto twice = s;
  for (std::size_t n = 0; n < s.size(); ++n) twice.add(s.features[n], s.domains[n], s.labels[n]);
  const auto a = fit_gda(s);
  const auto b = fit_gda(twice);
  EXPECT_EQ(a.means(), b.means());
  EXPECT_EQ(a.tied_cov(), b.tied_cov());
}

TEST(ClosedForm, IdentityCovariance) {
  const GdaModel m({{1, 0}, {0, 0}}, Matrix::identity(2));
  const auto p = closed_form_discriminant(m);
  EXPECT_EQ(p.weights(0, 0), 1.0);
  EXPECT_EQ(p.weights(0, 1), 0.0);
  EXPECT_EQ(p.bias[0], -0.5);
  EXPECT_EQ(p.weights(1, 0), 0.0);
  EXPECT_EQ(p.weights(1, 1), 0.0);
  EXPECT_EQ(p.bias[1], 0.0);
}

TEST(ClosedForm, CorrelatedCovariance) {
  const GdaModel m({{1, 0}, {0, 1}}, Matrix(2, 2, {4, 2, 2, 3}));
  const auto p = closed_form_discriminant(m);
  EXPECT_NEAR(p.weights(0, 0), 0.375, 1e-15);
  EXPECT_NEAR(p.weights(0, 1), -0.25, 1e-15);
  EXPECT_NEAR(p.bias[0], -0.1875, 1e-15);
}

TEST(ClassLikelihood, AtMean) {
  const GdaModel m({{0, 0}, {5, 5}}, Matrix::identity(2));
  EXPECT_NEAR(class_likelihood(m, std::vector<double>{0, 0}, 0), 1.0 / (2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(class_likelihood(m, std::vector<double>{0, 0}, 0), 0.15915, 1e-5);
}

TEST(ClassLikelihood, UnitOffset) {
  const GdaModel m({{0, 0}, {5, 5}}, Matrix::identity(2));
  EXPECT_NEAR(class_likelihood(m, std::vector<double>{1, 0}, 0), 0.09653, 1e-5);
}

TEST(ClassLikelihood, VanishesFarAway) {
  const GdaModel m({{0, 0}, {5, 5}}, Matrix::identity(2));
  double prev = 1.0;
  for (double r : {1.0, 5.0, 20.0, 1000.0}) {
    const double p = class_likelihood(m, std::vector<double>{r, 0}, 0);
    EXPECT_LT(p, prev);
    prev = p;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(ClassLikelihood, MatchesExplicitDensity) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto m = random_model(rng, 3, 1 + rng.below(5));
    Vector z(m.dim());
    for (double& v : z) v = rng.normal();
    const std::size_t i = rng.below(3);
    ASSERT_LE(oracle::rel_error(class_likelihood(m, z, i), oracle::gaussian_density(z, m.mean(i), m.tied_cov()), 0.0),
              1e-9);
  }
}

TEST(Posterior, SymmetricPoint) {
  const GdaModel m({{1, 0}, {-1, 0}}, Matrix::identity(2));
  const auto p = posterior(m, std::vector<double>{0, 7});
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
}

TEST(Posterior, TwoClassLogistic) {
  const GdaModel m({{3, 0}, {-3, 0}}, Matrix::identity(2));
  const auto p = posterior(m, std::vector<double>{3, 0});
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-18.0)), 1e-15);
}

TEST(Posterior, MatchesBayesRule) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + rng.below(4);
    const auto m = random_model(rng, k, 1 + rng.below(4));
    for (int s = 0; s < 10; ++s) {
      Vector z(m.dim());
      for (double& v : z) v = rng.normal();
      const auto got = posterior(m, z);
      const auto want = bayes_posterior(m, z);
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        ASSERT_NEAR(got[i], want[i], 1e-10);
        ASSERT_GT(got[i], 0.0);
        sum += got[i];
      }
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(ClosedForm, ArgmaxMatchesLikelihood) {
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.below(3);
    const auto truth = random_model(rng, k, 2 + rng.below(3));
    LabeledSet data{truth.dim(), {}, {}, {}};
    const auto l = truth.chol().to_dense();
    for (int n = 0; n < 60; ++n) {
      const std::size_t y = static_cast<std::size_t>(n) % k;
      Vector e(truth.dim());
      for (double& v : e) v = rng.normal();
      Vector x = matvec(l, e);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] += truth.mean(y)[j];
      data.add(std::move(x), Domain::in, static_cast<int>(y));
    }
    const auto fitted = fit_gda(data);
    const auto disc = closed_form_discriminant(fitted);
    for (const auto& x : data.features) {
      const auto f = linear_forward(disc, x);
      std::size_t best_f = 0, best_p = 0;
      for (std::size_t i = 1; i < k; ++i) {
        if (f[i] > f[best_f]) best_f = i;
        if (class_log_likelihood(fitted, x, i) > class_log_likelihood(fitted, x, best_p)) best_p = i;
      }
      ASSERT_EQ(best_f, best_p);
    }
  }
}

TEST(Synthetic, CenterIsInFarIsOut) {
  const double zeta = standard_density_at_radius(2.5, 2);
  const GdaModel m({{2, 0}, {-2, 0}}, Matrix::identity(2));
  auto max_density = [&](std::span<const double> x) {
    return std::max(class_likelihood(m, x, 0), class_likelihood(m, x, 1));
  };
  EXPECT_GT(max_density(std::vector<double>{2, 0}), zeta);
  EXPECT_LE(max_density(std::vector<double>{20, 20}), zeta);
}

TEST(Synthetic, DomainsRespectThreshold) {
  const double mu = 2.0;
  const double zeta = standard_density_at_radius(2.0, 2);
  const auto s = sample_synthetic(mu, zeta, 4000, 99);
  const GdaModel m({{mu, 0}, {-mu, 0}}, Matrix::identity(2));
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const double p = std::max(class_likelihood(m, s.features[n], 0), class_likelihood(m, s.features[n], 1));
    if (s.domains[n] == Domain::in) {
      ++n_in;
      ASSERT_GT(p, zeta);
      ASSERT_EQ(s.labels[n], static_cast<int>(n % 2));
    } else {
      ++n_out;
      ASSERT_LE(p, zeta);
      ASSERT_EQ(s.labels[n], -1);
    }
  }
  EXPECT_GT(n_in, 0u);
  EXPECT_GT(n_out, 0u);
}

TEST(Synthetic, Deterministic) {
  const double zeta = standard_density_at_radius(2.5, 2);
  EXPECT_EQ(sample_synthetic(1.5, zeta, 500, 7), sample_synthetic(1.5, zeta, 500, 7));
  EXPECT_NE(sample_synthetic(1.5, zeta, 500, 7), sample_synthetic(1.5, zeta, 500, 8));
}

TEST(Synthetic, InvalidThreshold) {
  EXPECT_THROW(sample_synthetic(1.0, standard_density_max(2), 10, 1), InvalidThreshold);
  EXPECT_THROW(sample_synthetic(1.0, 1.0, 10, 1), InvalidThreshold);
  EXPECT_THROW(sample_synthetic(1.0, 0.0, 10, 1), InvalidThreshold);
}

TEST(Synthetic, CountsAreExact) {
  const double zeta = standard_density_at_radius(2.5, 2);
  const auto s = sample_synthetic_counts(2.0, zeta, 50, 20, 3);
  EXPECT_EQ(s.count(Domain::in), 50u);
  EXPECT_EQ(s.count(Domain::out), 20u);
  for (std::size_t n = 0; n < 50; ++n) EXPECT_EQ(s.domains[n], Domain::in);
}

TEST(Csv, RoundTrip) {
  const double zeta = standard_density_at_radius(2.0, 3);
  const auto s = sample_synthetic(2.0, zeta, 200, 4, 3);
  const std::string text = to_csv(s);
  EXPECT_EQ(text.substr(0, text.find('\n')), "x0,x1,x2,label,domain");
  EXPECT_EQ(labeled_set_from_csv(text), s);
}

TEST(Csv, OutRowsHaveEmptyLabel) {
  LabeledSet s{1, {}, {}, {}};
  s.add({0.5}, Domain::out);
  EXPECT_EQ(to_csv(s), "x0,label,domain\n0.5,,out\n");
}

}  // namespace
}  // namespace oelab
