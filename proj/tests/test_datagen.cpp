#include <doctest.h>

#include <cmath>

#include "rbmsem/datagen.hpp"
#include "rbmsem/errors.hpp"
#include "support.hpp"

using namespace rbmsem;
using presets::Reliability;

namespace {

struct Moments {
  double mean, var, skew, exkurt;
};

Moments moments_of(const Vector& x) {
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  double m2 = 0, m3 = 0, m4 = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double r = x[i] - mean;
    m2 += r * r;
    m3 += r * r * r;
    m4 += r * r * r * r;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  return {mean, m2, m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0};
}

// y = eta: one indicator per latent, unit loadings and no measurement error.
ModelSpec error_free(int q) {
  auto pats = testing_support::empty_patterns(q, q);
  int idx = 0;
  for (int k = 0; k < q; ++k) {
    pats[static_cast<int>(MatrixId::Lambda)].set_fixed(k, k, 1.0);
    pats[static_cast<int>(MatrixId::Theta)].set_fixed(k, k, 0.0);
  }
  for (int k = 0; k < q; ++k)
    for (int l = 0; l <= k; ++l) pats[static_cast<int>(MatrixId::Psi)].set_free(k, l, idx++);
  return ModelSpec(q, q, std::move(pats), false);
}

Matrix sample_cov(const Matrix& x) {
  const Matrix c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows());
}

double fleishman_skew(const std::array<double, 4>& k) {
  const double b = k[1], c = k[2], d = k[3];
  return 2 * c * (b * b + 24 * b * d + 105 * d * d + 2);
}

}  // namespace

TEST_CASE("Fleishman coefficients") {
  const auto id = fleishman_coeffs(DistributionSpec::normal());
  CHECK(id[0] == 0.0);
  CHECK(id[1] == 1.0);
  CHECK(id[2] == 0.0);
  CHECK(id[3] == 0.0);

  // frozen regression values for skewness -2, excess kurtosis 6
  const auto k = fleishman_coeffs(DistributionSpec::nonnormal());
  CHECK(k[1] == doctest::Approx(0.82632385707).epsilon(1e-9));
  CHECK(k[2] == doctest::Approx(-0.31374908536).epsilon(1e-9));
  CHECK(k[3] == doctest::Approx(0.02270660516).epsilon(1e-9));
  CHECK(k[0] == -k[2]);
  CHECK(fleishman_skew(k) == doctest::Approx(-2.0).epsilon(1e-9));

  const auto pos = fleishman_coeffs({0.5, 1.0});
  CHECK(pos[2] > 0.0);
  CHECK(pos[2] == doctest::Approx(0.0731).epsilon(1e-3));
  CHECK(fleishman_skew(pos) == doctest::Approx(0.5).epsilon(1e-9));

  CHECK_THROWS_AS(fleishman_coeffs({2.0, 1.0}), std::invalid_argument);
  CHECK_FALSE(DistributionSpec{2.0, 1.0}.feasible());
}

TEST_CASE("distribution parsing") {
  CHECK(parse_distribution("normal").is_normal());
  const DistributionSpec nn = parse_distribution("nonnormal");
  CHECK(nn.skewness == -2.0);
  CHECK(nn.excess_kurtosis == 6.0);
  const DistributionSpec custom = parse_distribution("0.5,1");
  CHECK(custom.skewness == 0.5);
  CHECK(custom.excess_kurtosis == 1.0);
  CHECK(parse_distribution(distribution_name(custom)).skewness == 0.5);
  CHECK(distribution_name(DistributionSpec::nonnormal()) == "nonnormal");
  CHECK_THROWS_AS(parse_distribution("lognormal"), std::invalid_argument);
}

TEST_CASE("intermediate correlation inverts the Fleishman correlation map") {
  const auto id = fleishman_coeffs(DistributionSpec::normal());
  CHECK(intermediate_correlation(0.3, id, id) == doctest::Approx(0.3).epsilon(1e-9));
  const auto k = fleishman_coeffs(DistributionSpec::nonnormal());
  const double b = k[1], c = k[2], d = k[3];
  for (double target : {-0.4, 0.17, 0.6}) {
    const double r = intermediate_correlation(target, k, k);
    const double back = r * (b * b + 6 * b * d + 9 * d * d) + r * r * 2 * c * c + r * r * r * 6 * d * d;
    CHECK(back == doctest::Approx(target).epsilon(1e-9));
  }
}

TEST_CASE("normal GCM data reproduce the implied covariance") {
  const ModelSpec spec = presets::gcm();
  const Vector truth = presets::gcm_truth(Reliability::High);
  const Matrix sigma = implied_moments(spec, truth).sigma;
  const Matrix s = summarize(simulate(spec, truth, 200000, DistributionSpec::normal(), 1)).s;
  CHECK(((s - sigma).array() / sigma.array()).abs().maxCoeff() < 0.02);
}

TEST_CASE("two-factor data reproduce the implied covariance in both settings") {
  const ModelSpec spec = presets::two_factor();
  const Vector truth = presets::two_factor_truth(Reliability::Low);
  const Matrix sigma = implied_moments(spec, truth).sigma;
  for (auto dist : {DistributionSpec::normal(), DistributionSpec::nonnormal()}) {
    const Matrix s = summarize(simulate(spec, truth, 200000, dist, 2)).s;
    // errors on the correlation scale; small covariances make relative errors noisy
    const Vector sd = sigma.diagonal().cwiseSqrt();
    CHECK(((s - sigma).array() / (sd * sd.transpose()).array()).abs().maxCoeff() < 0.02);
  }
}

TEST_CASE("non-normal drivers hit the skewness and kurtosis targets") {
  const ModelSpec spec = error_free(1);
  const SimulatedData sim = simulate_with_drivers(spec, Vector::Constant(1, 1.0), 200000, DistributionSpec::nonnormal(), 3);
  const Moments m = moments_of(sim.zeta.col(0));
  CHECK(std::abs(m.mean) < 0.01);
  CHECK(std::abs(m.var - 1.0) < 0.01);
  CHECK(std::abs(m.skew + 2.0) < 0.1);
  CHECK(std::abs(m.exkurt - 6.0) < 0.5);
}

TEST_CASE("error-free measurement copies the latent draws") {
  const ModelSpec spec = error_free(2);
  Vector psi(3);
  psi << 2.0, 0.6, 1.0;  // psi11, psi21, psi22
  const SimulatedData sim = simulate_with_drivers(spec, psi, 200000, DistributionSpec::normal(), 4);
  CHECK(sim.y == sim.zeta);
  CHECK(sim.eps.cwiseAbs().maxCoeff() == 0.0);
  const Matrix s = sample_cov(sim.y);
  CHECK(s(0, 0) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(s(1, 0) == doctest::Approx(0.6).epsilon(0.02));
  CHECK(s(1, 1) == doctest::Approx(1.0).epsilon(0.02));

  const SimulatedData nn = simulate_with_drivers(spec, psi, 200000, DistributionSpec::nonnormal(), 5);
  const Matrix sn = sample_cov(nn.zeta);
  const double corr = sn(1, 0) / std::sqrt(sn(0, 0) * sn(1, 1));
  CHECK(corr == doctest::Approx(0.6 / std::sqrt(2.0)).epsilon(0.03));
}

TEST_CASE("regeneration is bit-identical and seeds matter") {
  const ModelSpec spec = presets::two_factor();
  const Vector truth = presets::two_factor_truth(Reliability::High);
  for (int n : {20, 5000}) {
    const Dataset a = simulate(spec, truth, n, DistributionSpec::nonnormal(), 77);
    const Dataset b = simulate(spec, truth, n, DistributionSpec::nonnormal(), 77);
    CHECK(a == b);
    CHECK(a != simulate(spec, truth, n, DistributionSpec::nonnormal(), 78));
  }
  // prefix property: row r only depends on (seed, r)
  CHECK(simulate(spec, truth, 20, DistributionSpec::normal(), 9) ==
        simulate(spec, truth, 50, DistributionSpec::normal(), 9).topRows(20));
}

TEST_CASE("simulation rejects bad inputs") {
  const ModelSpec spec = presets::gcm();
  const Vector truth = presets::gcm_truth(Reliability::High);
  CHECK_THROWS_AS(simulate(spec, truth, 10, {2.0, 1.0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(simulate(spec, truth, 0, DistributionSpec::normal(), 1), std::invalid_argument);
  Vector bad = truth;
  bad[4] = 300.0;
  CHECK_THROWS_AS(simulate(spec, bad, 10, DistributionSpec::normal(), 1), std::domain_error);
}
