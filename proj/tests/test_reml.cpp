#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rbmsem/datagen.hpp"
#include "rbmsem/estimators.hpp"
#include "support.hpp"

using namespace rbmsem;
using presets::Reliability;

namespace {

Dataset random_intercepts(int n, int t, double psi, double sigma2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Dataset d(n, t);
  for (int i = 0; i < n; ++i) {
    const double u = 3.0 + std::sqrt(psi) * z(rng);
    for (int k = 0; k < t; ++k) d(i, k) = u + std::sqrt(sigma2) * z(rng);
  }
  return d;
}

}  // namespace

TEST_CASE("balanced random-intercept REML matches the ANOVA estimators") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const int n = 40, t = 5;
    const Dataset d = random_intercepts(n, t, 2.0, 1.0, seed);
    const Vector subj = d.rowwise().mean();
    const double grand = subj.mean();
    double ssw = 0.0, ssb = 0.0;
    for (int i = 0; i < n; ++i) {
      ssb += t * (subj[i] - grand) * (subj[i] - grand);
      for (int k = 0; k < t; ++k) ssw += (d(i, k) - subj[i]) * (d(i, k) - subj[i]);
    }
    const double msw = ssw / (n * (t - 1.0));
    const double psi = (ssb / (n - 1.0) - msw) / t;
    REQUIRE(psi > 0.0);

    const FitResult fit = fit_reml_growth(Matrix::Ones(t, 1), d);
    REQUIRE(fit.converged);
    CHECK(fit.theta_hat.names == std::vector<std::string>{"beta1", "psi11", "sigma2"});
    CHECK(fit.theta_hat.values[0] == doctest::Approx(grand).epsilon(1e-10));
    CHECK(fit.theta_hat.values[1] == doctest::Approx(psi).epsilon(1e-6));
    CHECK(fit.theta_hat.values[2] == doctest::Approx(msw).epsilon(1e-6));
    // SE of the grand mean: sqrt((psi + sigma2 / t) / n)
    CHECK(fit.se[0] == doctest::Approx(std::sqrt((psi + msw / t) / n)).epsilon(1e-6));
  }
}

TEST_CASE("REML and ML agree on the GCM at n = 1000") {
  const ModelSpec spec = presets::gcm();
  const Dataset d = simulate(spec, presets::gcm_truth(Reliability::High), 1000, DistributionSpec::normal(), 8);
  const FitResult reml = fit_reml_gcm(d);
  const FitResult ml = fit_ml(spec, d, default_bounds(spec, summarize(d)));
  REQUIRE(reml.acceptable);
  REQUIRE(ml.acceptable);
  CHECK(reml.estimator == Estimator::REML);
  CHECK(reml.theta_hat.names == spec.parameter_names());
  for (const char* name : {"psi11", "psi22", "psi12", "theta11"}) {
    const int a = spec.index_of(name);
    CHECK(reml.theta_hat.values[a] == doctest::Approx(ml.theta_hat.values[a]).epsilon(0.01));
  }
  for (int a : {0, 1}) CHECK(std::abs(reml.theta_hat.values[a] - ml.theta_hat.values[a]) < 0.05);
}

TEST_CASE("REML rejects a single subject and mismatched designs") {
  const Dataset one = simulate(presets::gcm(), presets::gcm_truth(Reliability::High), 1, DistributionSpec::normal(), 1);
  CHECK_THROWS_AS(fit_reml_gcm(one), std::invalid_argument);
  const Dataset six = testing_support::normal_sample(10, 6, 1);
  CHECK_THROWS_AS(fit_reml_gcm(six), std::invalid_argument);
}

TEST_CASE("REML log-likelihood of the growth design matches a dense evaluation") {
  // Stacked V, X, y without the 2 pi constant.
  const ModelSpec spec = presets::gcm();
  const Matrix design = spec.pattern(MatrixId::Lambda).fixed_part();
  const Dataset d = simulate(spec, presets::gcm_truth(Reliability::Low), 12, DistributionSpec::normal(), 3);
  Vector v(4);
  v << 300.0, 60.0, 15.0, 1200.0;
  const int n = 12, t = 10;
  Matrix psi(2, 2);
  psi << 300, 15, 15, 60;
  Matrix vi = design * psi * design.transpose();
  vi.diagonal().array() += 1200.0;
  Matrix V = Matrix::Zero(n * t, n * t), X(n * t, 2);
  Vector y(n * t);
  for (int i = 0; i < n; ++i) {
    V.block(i * t, i * t, t, t) = vi;
    X.middleRows(i * t, t) = design;
    y.segment(i * t, t) = d.row(i).transpose();
  }
  const Eigen::LLT<Matrix> vllt(V);
  const Matrix vinv = vllt.solve(Matrix::Identity(n * t, n * t));
  const Matrix xtvx = X.transpose() * vinv * X;
  const Vector beta = xtvx.ldlt().solve(X.transpose() * vinv * y);
  const Vector r = y - X * beta;
  const double logdet_v = 2.0 * vllt.matrixLLT().diagonal().array().log().sum();
  const double expected = -0.5 * (logdet_v + std::log(xtvx.determinant()) + r.dot(vinv * r));
  CHECK(reml_loglik_growth(design, v, d) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("GCM marginal likelihood equals the long-format mixed model") {
  const ModelSpec spec = presets::gcm();
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    const Vector truth = presets::gcm_truth(k % 2 ? Reliability::High : Reliability::Low);
    const Dataset d = simulate(spec, truth, 15 + k, DistributionSpec::normal(), 40 + static_cast<std::uint64_t>(k));
    const Vector theta = testing_support::random_point(spec, truth, rng);
    CHECK(std::abs(lmm_marginal_loglik_gcm(theta, d) - loglik(spec, theta, summarize(d))) < 1e-8);
  }
}
