#include "rbmsem/datagen.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rbmsem/errors.hpp"
#include "rbmsem/seeding.hpp"

namespace rbmsem {

namespace {

using Coeffs = std::array<double, 4>;

Eigen::Vector3d fleishman_residual(const Eigen::Vector3d& x, double g1, double g2) {
  const double b = x[0], c = x[1], d = x[2];
  return {b * b + 6 * b * d + 2 * c * c + 15 * d * d - 1,
          2 * c * (b * b + 24 * b * d + 105 * d * d + 2) - g1,
          24 * (b * d + c * c * (1 + b * b + 28 * b * d) + d * d * (12 + 48 * b * d + 141 * c * c + 225 * d * d)) - g2};
}

Eigen::Matrix3d fleishman_jacobian(const Eigen::Vector3d& x) {
  const double b = x[0], c = x[1], d = x[2];
  Eigen::Matrix3d j;
  j << 2 * b + 6 * d, 4 * c, 6 * b + 30 * d,
      2 * c * (2 * b + 24 * d), 2 * (b * b + 24 * b * d + 105 * d * d + 2), 2 * c * (24 * b + 210 * d),
      24 * (d + c * c * (2 * b + 28 * d) + 48 * d * d * d),
      24 * (2 * c * (1 + b * b + 28 * b * d) + 282 * c * d * d),
      24 * (b + 28 * b * c * c + 2 * d * (12 + 48 * b * d + 141 * c * c + 225 * d * d) + d * d * (48 * b + 450 * d));
  return j;
}

double transform(const Coeffs& k, double z) { return k[0] + z * (k[1] + z * (k[2] + z * k[3])); }

// Draws x ~ (0, C) with Fleishman margins. Zero-variance components stay 0.
class DriverSampler {
 public:
  DriverSampler(const Matrix& cov, const DistributionSpec& dist, const char* what) : dim_(cov.rows()) {
    for (Eigen::Index i = 0; i < dim_; ++i) {
      if (cov(i, i) < 0.0) throw std::invalid_argument(std::string(what) + " has a negative variance");
      if (cov(i, i) > 0.0) active_.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(active_.size());
    sd_.resize(k);
    Matrix corr(k, k);
    for (Eigen::Index a = 0; a < k; ++a) sd_[a] = std::sqrt(cov(active_[a], active_[a]));
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) corr(a, b) = cov(active_[a], active_[b]) / (sd_[a] * sd_[b]);
    normal_ = dist.is_normal();
    if (!normal_) {
      coeffs_ = fleishman_coeffs(dist);
      for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < a; ++b)
          corr(a, b) = corr(b, a) = corr(a, b) == 0.0 ? 0.0 : intermediate_correlation(corr(a, b), coeffs_, coeffs_);
    }
    Eigen::LLT<Matrix> llt(corr);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite(std::string(normal_ ? "" : "intermediate ") + "correlation matrix of " + what +
                                " is not positive definite");
    chol_ = llt.matrixL();
  }

  Eigen::Index dim() const { return dim_; }
  Eigen::Index draws() const { return static_cast<Eigen::Index>(active_.size()); }

  // `z` holds draws() independent standard normals.
  void apply(const double* z, double* out) const {
    const auto k = draws();
    for (Eigen::Index i = 0; i < dim_; ++i) out[i] = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      double x = 0.0;
      for (Eigen::Index b = 0; b <= a; ++b) x += chol_(a, b) * z[b];
      if (!normal_) x = transform(coeffs_, x);
      out[active_[static_cast<std::size_t>(a)]] = sd_[a] * x;
    }
  }

 private:
  Eigen::Index dim_;
  std::vector<Eigen::Index> active_;
  Vector sd_;
  Matrix chol_;
  bool normal_ = true;
  Coeffs coeffs_{0.0, 1.0, 0.0, 0.0};
};

}  // namespace

DistributionSpec parse_distribution(std::string_view text) {
  if (text == "normal") return DistributionSpec::normal();
  if (text == "nonnormal" || text == "non-normal" || text == "skewed") return DistributionSpec::nonnormal();
  const auto comma = text.find(',');
  if (comma != std::string_view::npos) {
    try {
      std::size_t used1 = 0, used2 = 0;
      const std::string a(text.substr(0, comma)), b(text.substr(comma + 1));
      DistributionSpec d{std::stod(a, &used1), std::stod(b, &used2)};
      if (used1 == a.size() && used2 == b.size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("unknown distribution '" + std::string(text) + "' (normal, nonnormal or skew,kurtosis)");
}

std::string distribution_name(const DistributionSpec& dist) {
  if (dist.is_normal()) return "normal";
  if (dist.skewness == -2.0 && dist.excess_kurtosis == 6.0) return "nonnormal";
  std::ostringstream os;
  os << dist.skewness << "," << dist.excess_kurtosis;
  return os.str();
}

std::array<double, 4> fleishman_coeffs(const DistributionSpec& dist) {
  if (!dist.feasible())
    throw std::invalid_argument("infeasible skewness/kurtosis pair: excess kurtosis must be >= skewness^2 - 2");
  if (dist.is_normal()) return {0.0, 1.0, 0.0, 0.0};
  const double g1 = dist.skewness, g2 = dist.excess_kurtosis;
  Eigen::Vector3d x(1.0, 0.0, 0.0);
  for (int it = 0; it < 200; ++it) {
    const Eigen::Vector3d f = fleishman_residual(x, g1, g2);
    const double norm = f.norm();
    if (norm < 1e-12) return {-x[1], x[0], x[1], x[2]};
    const Eigen::Vector3d step = fleishman_jacobian(x).fullPivLu().solve(-f);
    if (!step.allFinite()) break;
    double t = 1.0;
    while (t > 1e-10 && !(fleishman_residual(x + t * step, g1, g2).norm() < (1.0 - 1e-4 * t) * norm)) t *= 0.5;
    x += t * step;
  }
  if (fleishman_residual(x, g1, g2).norm() < 1e-10) return {-x[1], x[0], x[1], x[2]};
  throw std::runtime_error("Fleishman system did not converge");
}

double intermediate_correlation(double target, const std::array<double, 4>& c1, const std::array<double, 4>& c2) {
  if (!(target >= -1.0 && target <= 1.0)) throw std::invalid_argument("target correlation outside [-1, 1]");
  const double b1 = c1[1], e1 = c1[2], d1 = c1[3];
  const double b2 = c2[1], e2 = c2[2], d2 = c2[3];
  auto h = [&](double r) {
    return r * (b1 * b2 + 3 * b1 * d2 + 3 * d1 * b2 + 9 * d1 * d2) + r * r * (2 * e1 * e2) + r * r * r * (6 * d1 * d2) -
           target;
  };
  double lo = -1.0, hi = 1.0;
  if (h(lo) > 0.0 || h(hi) < 0.0) throw std::domain_error("target correlation not reachable after the Fleishman transform");
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    const double fm = h(mid);
    if (fm == 0.0) return mid;
    (fm < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SimulatedData simulate_with_drivers(const ModelSpec& spec, const Vector& theta, int n, const DistributionSpec& dist,
                                    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  // Same evaluation path as implied_moments; also rejects a singular I - B.
  const ModelState state = evaluate_model(spec, theta);
  {
    Eigen::LLT<Matrix> llt(state.moments.sigma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("implied covariance is not positive definite");
  }
  const ModelMatrices& mats = state.matrices;
  const DriverSampler zeta_gen(mats.psi, dist, "Psi");
  const DriverSampler eps_gen(mats.theta, dist, "Theta");
  const int p = spec.p(), q = spec.q();

  SimulatedData out{Dataset(n, p), Matrix(n, q), Matrix(n, p)};
#if defined(RBMSEM_HAVE_OPENMP)
#pragma omp parallel for schedule(static) if (n >= 4096)
#endif
  for (int r = 0; r < n; ++r) {
    std::mt19937_64 rng(substream(seed, {static_cast<std::uint64_t>(r)}));
    std::normal_distribution<double> normal;
    Vector z(zeta_gen.draws() + eps_gen.draws());
    for (Eigen::Index a = 0; a < z.size(); ++a) z[a] = normal(rng);
    Vector zeta(q), eps(p);
    zeta_gen.apply(z.data(), zeta.data());
    eps_gen.apply(z.data() + zeta_gen.draws(), eps.data());
    const Vector eta = state.b_tilde * (mats.alpha + zeta);
    out.y.row(r) = (mats.nu + mats.lambda * eta + eps).transpose();
    out.zeta.row(r) = zeta.transpose();
    out.eps.row(r) = eps.transpose();
  }
  return out;
}

Dataset simulate(const ModelSpec& spec, const Vector& theta, int n, const DistributionSpec& dist, std::uint64_t seed) {
  return simulate_with_drivers(spec, theta, n, dist, seed).y;
}

}  // namespace rbmsem
