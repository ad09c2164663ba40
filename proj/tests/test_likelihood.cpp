#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rbmsem/datagen.hpp"
#include "rbmsem/errors.hpp"
#include "rbmsem/estimators.hpp"
#include "rbmsem/likelihood.hpp"
#include "rbmsem/model.hpp"
#include "support.hpp"

using namespace rbmsem;
using presets::Reliability;
using testing_support::max_rel_error;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Independent central-difference oracle, h = eps^(1/3) max(1, |x|).
Vector fd_gradient(const ModelSpec& spec, const Vector& theta, const DataSummary& s) {
  Vector g(theta.size());
  for (Eigen::Index a = 0; a < theta.size(); ++a) {
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(theta[a]));
    Vector up = theta, down = theta;
    up[a] += h;
    down[a] -= h;
    g[a] = (loglik(spec, up, s) - loglik(spec, down, s)) / (up[a] - down[a]);
  }
  return g;
}

Dataset simulated(const char* name, Reliability rel, int n, std::uint64_t seed) {
  return simulate(presets::by_name(name), presets::truth(name, rel), n, DistributionSpec::normal(), seed);
}

Dataset univariate(std::initializer_list<double> ys) {
  Dataset d(static_cast<Eigen::Index>(ys.size()), 1);
  Eigen::Index i = 0;
  for (double y : ys) d(i++, 0) = y;
  return d;
}

}  // namespace

TEST_CASE("scalar log-likelihood example") {
  auto pats = testing_support::empty_patterns(1, 0);
  pats[static_cast<int>(MatrixId::Nu)].set_free(0, 0, 0);
  pats[static_cast<int>(MatrixId::Theta)].set_free(0, 0, 1);
  const ModelSpec spec(1, 0, pats, true);
  const DataSummary s = summarize(univariate({0.0, 2.0}));
  CHECK(s.ybar[0] == 1.0);
  CHECK(s.s(0, 0) == 1.0);
  Vector theta(2);
  theta << 0.0, 1.0;
  CHECK(loglik(spec, theta, s) == doctest::Approx(-kLog2Pi - 2.0).epsilon(1e-14));
}

TEST_CASE("saturated log-likelihood at the sample moments") {
  const ModelSpec spec = testing_support::saturated(3);
  const Dataset d = testing_support::normal_sample(50, 3, 4);
  const DataSummary s = summarize(d);
  ModelMatrices m = unpack(spec, Vector::Zero(static_cast<Eigen::Index>(spec.free_count())));
  m.nu = s.ybar;
  m.theta = s.s;
  const Vector theta = pack(spec, m);
  const double expected = -0.5 * 50 * (3 * kLog2Pi + std::log(s.s.determinant()) + 3);
  CHECK(loglik(spec, theta, s) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(score_general(spec, theta, s).cwiseAbs().maxCoeff() < 1e-9);
  const ScoreBlocks b = score_blocks(spec, theta, s);
  CHECK(b.l_mu.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.l_sigma.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("non-PD Sigma raises a domain error") {
  const ModelSpec spec = testing_support::saturated(1);
  Vector theta(2);
  theta << 0.0, -1.0;
  CHECK_THROWS_AS(loglik(spec, theta, summarize(univariate({0.0, 1.0}))), NotPositiveDefinite);
}

TEST_CASE("log-likelihood contributions") {
  const ModelSpec spec = presets::gcm();
  const Vector truth = presets::gcm_truth(Reliability::High);
  Dataset d = simulated("gcm", Reliability::High, 40, 3);
  d.row(7) = d.row(3);
  const Vector li = loglik_contributions(spec, truth, d);
  CHECK(li.sum() == doctest::Approx(loglik(spec, truth, summarize(d))).epsilon(1e-8));
  CHECK(li[7] == li[3]);

  // centred version
  const ModelSpec tf = presets::two_factor();
  const Dataset y = simulated("two_factor", Reliability::Low, 30, 4);
  CHECK(loglik_contributions(tf, presets::two_factor_truth(Reliability::Low), y).sum() ==
        doctest::Approx(loglik(tf, presets::two_factor_truth(Reliability::Low), summarize(y))).epsilon(1e-8));

  auto pats = testing_support::empty_patterns(2, 0);
  pats[static_cast<int>(MatrixId::Nu)].set_free(0, 0, 0);
  pats[static_cast<int>(MatrixId::Nu)].set_free(1, 0, 1);
  pats[static_cast<int>(MatrixId::Theta)].set_fixed(0, 0, 1.0);
  pats[static_cast<int>(MatrixId::Theta)].set_fixed(1, 1, 1.0);
  const ModelSpec unit(2, 0, pats, true);
  Dataset one(1, 2);
  one << 0.3, -0.2;
  Vector mu(2);
  mu << 0.3, -0.2;
  CHECK(loglik_contributions(unit, mu, one)[0] == doctest::Approx(-kLog2Pi).epsilon(1e-15));
}

TEST_CASE("score block examples") {
  // p = 1, Sigma = 2, S = 4, mu = ybar -> L_Sigma = 1/2
  const ModelSpec spec = testing_support::saturated(1);
  const DataSummary s = summarize(univariate({-1.0, 3.0}));
  Vector theta(2);
  theta << s.ybar[0], 2.0;
  REQUIRE(s.s(0, 0) == 4.0);
  CHECK(score_blocks(spec, theta, s).l_sigma(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  // Theta score is (n/2)(L_Sigma)_ii
  CHECK(score_general(spec, theta, s)[1] == doctest::Approx(0.5 * 2 * 0.5).epsilon(1e-14));

  const ModelSpec sat = testing_support::saturated(2);
  const DataSummary s2 = summarize(testing_support::normal_sample(20, 2, 9));
  ModelMatrices m = unpack(sat, Vector::Zero(5));
  m.nu = s2.ybar.array() - 1.0;
  m.theta = Matrix::Identity(2, 2);
  CHECK((score_blocks(sat, pack(sat, m), s2).l_mu.array() > 0).all());
}

TEST_CASE("analytic scores match finite differences at 100 random points") {
  std::mt19937_64 rng(2024);
  for (const char* name : {"two_factor", "two_factor_with_means", "gcm"}) {
    const ModelSpec spec = presets::by_name(name);
    for (auto rel : {Reliability::High, Reliability::Low}) {
      const DataSummary s = summarize(simulated(name, rel, 200, 17));
      double worst = 0.0;
      for (int k = 0; k < 50; ++k) {
        const Vector theta = testing_support::random_point(spec, presets::truth(name, rel), rng);
        worst = std::max(worst, max_rel_error(score_general(spec, theta, s), fd_gradient(spec, theta, s)));
      }
      CHECK_MESSAGE(worst < 1e-6, name);
    }
  }
}

TEST_CASE("closed-form preset scores agree with the general chain rule") {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 100; ++k) {
    const DataSummary s2 = summarize(simulated("two_factor", Reliability::Low, 60, 100 + k));
    const Vector t2 = testing_support::random_point(presets::two_factor(), presets::two_factor_truth(Reliability::Low), rng);
    CHECK(max_rel_error(score_two_factor(t2, s2), score_general(presets::two_factor(), t2, s2)) < 1e-9);
    const DataSummary sg = summarize(simulated("gcm", Reliability::High, 60, 200 + k));
    const Vector tg = testing_support::random_point(presets::gcm(), presets::gcm_truth(Reliability::High), rng);
    CHECK(max_rel_error(score_gcm(tg, sg), score_general(presets::gcm(), tg, sg)) < 1e-9);
  }
}

TEST_CASE("scores vanish when the summary equals the implied moments") {
  const Vector truth = presets::two_factor_truth(Reliability::High);
  DataSummary s;
  s.n = 100;
  s.ybar = Vector::Zero(6);
  s.s = implied_moments(presets::two_factor(), truth).sigma;
  CHECK(score_two_factor(truth, s).cwiseAbs().maxCoeff() < 1e-10);

  const Vector g = presets::gcm_truth(Reliability::Low);
  DataSummary sg;
  sg.n = 100;
  sg.ybar = implied_moments(presets::gcm(), g).mu;
  sg.s = implied_moments(presets::gcm(), g).sigma * 1.1;  // only the alpha score must vanish
  const Vector score = score_gcm(g, sg);
  CHECK(std::abs(score[0]) < 1e-10);
  CHECK(std::abs(score[1]) < 1e-10);
}

TEST_CASE("psi12 score is twice the single-entry value") {
  const ModelSpec spec = presets::gcm();
  const Vector theta = presets::gcm_truth(Reliability::High);
  const DataSummary s = summarize(simulated("gcm", Reliability::High, 80, 5));
  const ScoreBlocks b = score_blocks(spec, theta, s);
  const Matrix lambda = unpack(spec, theta).lambda;
  const double naive = 0.5 * s.n * (lambda.transpose() * b.l_sigma * lambda)(0, 1);
  CHECK(score_gcm(theta, s)[4] == doctest::Approx(2.0 * naive).epsilon(1e-10));
}

TEST_CASE("j and e closed forms for the univariate normal") {
  const ModelSpec spec = testing_support::saturated(1);
  const Dataset d = testing_support::normal_sample(300, 1, 21).array() * 1.7 + 0.4;
  const DataSummary s = summarize(d);
  Vector mle(2);
  mle << s.ybar[0], s.s(0, 0);
  const double n = 300, th = mle[1];
  const Matrix j = info_j(spec, mle, s);
  CHECK(j(0, 0) == doctest::Approx(n / th).epsilon(1e-6));
  CHECK(j(1, 1) == doctest::Approx(n / (2 * th * th)).epsilon(1e-6));
  CHECK(std::abs(j(0, 1)) < 1e-6 * j(0, 0));

  const Vector c = d.col(0).array() - s.ybar[0];
  const double m3 = c.array().pow(3).mean(), m4 = c.array().pow(4).mean();
  for (ScoreRoute route : {ScoreRoute::Analytic, ScoreRoute::Numeric}) {
    const Matrix e = info_e(spec, mle, d, route);
    const double tol = route == ScoreRoute::Analytic ? 1e-10 : 1e-6;
    CHECK(e(0, 0) == doctest::Approx(n / th).epsilon(tol));
    CHECK(e(0, 1) == doctest::Approx(n * m3 / (2 * th * th * th)).epsilon(tol));
    CHECK(e(1, 1) == doctest::Approx(n * (m4 - th * th) / (4 * std::pow(th, 4))).epsilon(tol));
  }
}

TEST_CASE("e is a Gram matrix") {
  const ModelSpec spec = presets::two_factor();
  const Vector truth = presets::two_factor_truth(Reliability::Low);
  const Dataset d = simulated("two_factor", Reliability::Low, 50, 8);
  const Matrix e = info_e(spec, truth, d);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(e);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * e.cwiseAbs().maxCoeff());

  const ModelSpec gcm = presets::gcm();
  const Dataset one = simulated("gcm", Reliability::High, 1, 2);
  const Matrix e1 = info_e(gcm, presets::gcm_truth(Reliability::High), one);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig1(e1);
  const Vector ev = eig1.eigenvalues();
  CHECK(ev[ev.size() - 1] > 0);
  CHECK(ev.head(ev.size() - 1).cwiseAbs().maxCoeff() < 1e-8 * ev[ev.size() - 1]);
}

TEST_CASE("analytic and numeric per-observation scores agree") {
  std::mt19937_64 rng(31);
  for (const char* name : {"two_factor", "two_factor_with_means", "gcm"}) {
    const ModelSpec spec = presets::by_name(name);
    const Dataset d = simulated(name, Reliability::High, 25, 6);
    const Vector theta = testing_support::random_point(spec, presets::truth(name, Reliability::High), rng);
    const Matrix a = observation_scores(spec, theta, d, ScoreRoute::Analytic);
    const Matrix nm = observation_scores(spec, theta, d, ScoreRoute::Numeric);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) worst = std::max(worst, max_rel_error(a.row(i), nm.row(i)));
    CHECK_MESSAGE(worst < 1e-6, name);
    CHECK(max_rel_error(a.colwise().sum().transpose(), score_general(spec, theta, summarize(d))) < 1e-9);
  }
}

TEST_CASE("j doubles on duplicated data and the raw Hessian is symmetric") {
  for (const char* name : {"two_factor", "gcm"}) {
    const ModelSpec spec = presets::by_name(name);
    const Dataset d = simulated(name, Reliability::High, 100, 12);
    Dataset dd(200, d.cols());
    dd << d, d;
    const FitResult ml = fit_ml(spec, d, default_bounds(spec, summarize(d)));
    const Vector th = ml.theta_hat.values;
    Matrix raw;
    const Matrix j1 = info_j(spec, th, summarize(d), &raw);
    const Matrix j2 = info_j(spec, th, summarize(dd));
    CHECK((j2 - 2 * j1).cwiseAbs().maxCoeff() <= 1e-8 * j2.cwiseAbs().maxCoeff());
    CHECK((raw - raw.transpose()).cwiseAbs().maxCoeff() < 1e-6 * raw.cwiseAbs().maxCoeff());
    CHECK(j1 == j1.transpose());
    CHECK(Eigen::LLT<Matrix>(j1).info() == Eigen::Success);

    const Vector se1 = sandwich_se(spec, th, d);
    const Vector se2 = sandwich_se(spec, th, dd);
    CHECK(max_rel_error(se2 * std::sqrt(2.0), se1) < 1e-6);
  }
}

TEST_CASE("sandwich collapses to j^-1 when e = j") {
  Matrix j(3, 3);
  j << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
  const Matrix inv = j.inverse();
  CHECK((sandwich(j, j) - inv).cwiseAbs().maxCoeff() < 1e-14);
  const Vector se = sandwich_se(j, j);
  for (int a = 0; a < 3; ++a) CHECK(se[a] == doctest::Approx(std::sqrt(inv(a, a))).epsilon(1e-13));
  CHECK_THROWS_AS(sandwich_se(Matrix::Zero(3, 3), j), SingularMatrix);
}

TEST_CASE("sandwich SE of a normal mean") {
  const ModelSpec spec = testing_support::saturated(1);
  const Dataset d = testing_support::normal_sample(10000, 1, 77).array() * 2.0;
  const DataSummary s = summarize(d);
  Vector mle(2);
  mle << s.ybar[0], s.s(0, 0);
  CHECK(sandwich_se(spec, mle, d)[0] == doctest::Approx(std::sqrt(mle[1] / 10000)).epsilon(0.05));
}

TEST_CASE("shifting one indicator leaves the centred likelihood unchanged") {
  const ModelSpec spec = presets::two_factor();
  const Vector truth = presets::two_factor_truth(Reliability::High);
  Dataset d = simulated("two_factor", Reliability::High, 60, 13);
  const double before = loglik(spec, truth, summarize(d));
  d.col(2).array() += 7.5;
  CHECK(loglik(spec, truth, summarize(d)) == doctest::Approx(before).epsilon(1e-10));

  const ModelSpec means = presets::two_factor_with_means();
  const FitResult ml = fit_ml(means, d, default_bounds(means, summarize(d)));
  CHECK(ml.theta_hat.values[2] == doctest::Approx(summarize(d).ybar[2]).epsilon(1e-6));
}

TEST_CASE("GCM log-likelihood per observation converges to its expectation") {
  const ModelSpec spec = presets::gcm();
  const Vector truth = presets::gcm_truth(Reliability::High);
  const Matrix sigma = implied_moments(spec, truth).sigma;
  const DataSummary s = summarize(simulated("gcm", Reliability::High, 100000, 1));
  const double expected = -0.5 * (10 * kLog2Pi + std::log(sigma.determinant()) + 10);
  CHECK(loglik(spec, truth, s) / s.n == doctest::Approx(expected).epsilon(0.005));
}
