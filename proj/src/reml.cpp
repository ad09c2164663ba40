#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rbmsem/errors.hpp"
#include "rbmsem/estimators.hpp"
#include "rbmsem/numdiff.hpp"

namespace rbmsem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

int vech_size(int k) { return k * (k + 1) / 2; }

// (psi diagonal, psi lower off-diagonals row-major, sigma^2) -> Psi.
Matrix psi_from(const Vector& v, int k) {
  Matrix psi(k, k);
  for (int a = 0; a < k; ++a) psi(a, a) = v[a];
  int idx = k;
  for (int a = 1; a < k; ++a)
    for (int b = 0; b < a; ++b, ++idx) psi(a, b) = psi(b, a) = v[idx];
  return psi;
}

struct RemlTerms {
  double value = 0.0;
  Vector beta;
  Matrix xtvx;  // X' V^-1 X over all subjects
};

RemlTerms reml_terms(const Matrix& design, const Vector& v, const DataSummary& summary) {
  const int t = static_cast<int>(design.rows());
  const int k = static_cast<int>(design.cols());
  if (v.size() != vech_size(k) + 1) throw std::invalid_argument("REML parameter vector has the wrong length");
  const Matrix psi = psi_from(v, k);
  const double sigma2 = v[v.size() - 1];
  Eigen::LLT<Matrix> psi_llt(psi);
  if (psi_llt.info() != Eigen::Success || !(sigma2 > 0.0)) throw NotPositiveDefinite("random-effect covariance is not positive definite");

  Matrix vi = design * psi * design.transpose();
  vi.diagonal().array() += sigma2;
  Eigen::LLT<Matrix> llt(vi);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("subject covariance is not positive definite");
  const double logdet_vi = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Matrix vinv = llt.solve(Matrix::Identity(t, t));

  const double n = summary.n;
  const Matrix m = design.transpose() * vinv * design;
  Eigen::LLT<Matrix> mllt(m);
  if (mllt.info() != Eigen::Success) throw SingularMatrix("fixed-effect information is singular");
  RemlTerms out;
  out.beta = mllt.solve(design.transpose() * vinv * summary.ybar);
  out.xtvx = n * m;
  const double logdet_x = k * std::log(n) + 2.0 * mllt.matrixLLT().diagonal().array().log().sum();
  const Vector r = summary.ybar - design * out.beta;
  const double quad = n * (vinv.cwiseProduct(summary.s).sum() + r.dot(vinv * r));
  out.value = -0.5 * (n * logdet_vi + logdet_x + quad);
  return out;
}

void check_growth_data(const Matrix& design, const Dataset& data) {
  if (data.cols() != design.rows())
    throw std::invalid_argument("dataset has " + std::to_string(data.cols()) + " occasions, design expects " +
                                std::to_string(design.rows()));
  if (data.rows() < 2) throw std::invalid_argument("REML needs at least two subjects");
}

}  // namespace

double reml_loglik_growth(const Matrix& design, const Vector& variance_params, const Dataset& data) {
  check_growth_data(design, data);
  return reml_terms(design, variance_params, summarize(data)).value;
}

FitResult fit_reml_growth(const Matrix& design, const Dataset& data, const FitOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  check_growth_data(design, data);
  const int t = static_cast<int>(design.rows());
  const int k = static_cast<int>(design.cols());
  const int nv = vech_size(k) + 1;
  const DataSummary summary = summarize(data);
  const Vector var = summary.s.diagonal();
  if ((var.array() <= 0.0).any()) throw std::invalid_argument("an occasion has zero variance");

  // Same bound rules as the SEM path: variances up to twice the largest
  // variance they could explain, covariances inside the Cauchy-Schwarz box.
  BoundsPolicy bounds{Vector(nv), Vector(nv)};
  Vector psi_ub(k);
  for (int a = 0; a < k; ++a) {
    double ub = 0.0;
    for (int i = 0; i < t; ++i)
      if (design(i, a) != 0.0) ub = std::max(ub, 2.0 * var[i] / (design(i, a) * design(i, a)));
    psi_ub[a] = ub > 0.0 ? ub : 2.0 * var.maxCoeff();
    bounds.lower[a] = 0.0;
    bounds.upper[a] = psi_ub[a];
  }
  {
    int idx = k;
    for (int a = 1; a < k; ++a)
      for (int b = 0; b < a; ++b, ++idx) {
        bounds.upper[idx] = std::sqrt(psi_ub[a] * psi_ub[b]);
        bounds.lower[idx] = -bounds.upper[idx];
      }
  }
  bounds.lower[nv - 1] = 0.0;
  bounds.upper[nv - 1] = 2.0 * var.minCoeff();

  Vector start(nv);
  if (options.start && options.start->size() == nv) {
    start = *options.start;
  } else {
    // Psi by least squares on S - sigma^2 I with sigma^2 = min(var) / 2.
    const double s2 = 0.5 * var.minCoeff();
    Matrix target = summary.s;
    target.diagonal().array() -= s2;
    Matrix lhs(vech_size(t), nv - 1);
    Vector rhs(vech_size(t));
    int row = 0;
    for (int i = 0; i < t; ++i)
      for (int j = 0; j <= i; ++j, ++row) {
        rhs[row] = target(i, j);
        Vector e = Vector::Zero(nv);
        for (int c = 0; c < nv - 1; ++c) {
          e.setZero();
          e[c] = 1.0;
          const Matrix d = design * psi_from(e, k) * design.transpose();
          lhs(row, c) = d(i, j);
        }
      }
    start.head(nv - 1) = lhs.completeOrthogonalDecomposition().solve(rhs);
    start[nv - 1] = s2;
    const double floor = 0.05 * var.mean();
    for (int a = 0; a < k; ++a) start[a] = std::max(start[a], floor);
    int idx = k;
    for (int a = 1; a < k; ++a)
      for (int b = 0; b < a; ++b, ++idx) {
        const double lim = 0.9 * std::sqrt(start[a] * start[b]);
        start[idx] = std::clamp(start[idx], -lim, lim);
      }
  }
  for (int a = 0; a < nv; ++a) {
    const double margin = 1e-3 * (bounds.upper[a] - bounds.lower[a]);
    start[a] = std::clamp(start[a], bounds.lower[a] + margin, bounds.upper[a] - margin);
  }

  const double n = summary.n;
  auto value = [&](const Vector& v) { return reml_terms(design, v, summary).value; };
  auto fd_grad = [&](const Vector& v) {
    return Vector(numdiff::jacobian([&](const Vector& w) { return Vector::Constant(1, value(w)); }, v).row(0).transpose());
  };
  const Objective f = [&](const Vector& v, Vector* grad) -> double {
    try {
      const double out = -value(v) / n;
      if (grad) *grad = -fd_grad(v) / n;
      return out;
    } catch (const std::domain_error&) {
      return kInf;
    } catch (const NumericalDifferentiationError&) {
      return kInf;
    }
  };

  OptimOptions opt = options.optim;
  opt.scale = start.cwiseAbs().cwiseMax(1.0);
  OptimResult res = minimize_box(f, start, bounds.lower, bounds.upper, opt);
  if (!std::isfinite(res.value)) throw std::runtime_error("REML objective infeasible at the start value");

  Vector v = res.x;
  auto neg_hessian = [&](const Vector& w) {
    Matrix h = -numdiff::hessian(value, w);
    return Matrix(0.5 * (h + h.transpose()));
  };
  auto strictly_inside = [&](const Vector& w) {
    for (int a = 0; a < nv; ++a)
      if (!(w[a] > bounds.lower[a] && w[a] < bounds.upper[a])) return false;
    return true;
  };
  if (res.converged && options.polish && strictly_inside(v)) {
    double cur = value(v);
    for (int step = 0; step < 3; ++step) {
      try {
        Eigen::LLT<Matrix> llt(neg_hessian(v));
        if (llt.info() != Eigen::Success) break;
        const Vector cand = v + llt.solve(fd_grad(v));
        if (!cand.allFinite() || !strictly_inside(cand)) break;
        const double next = value(cand);
        if (!(next >= cur - 1e-10 * std::max(1.0, std::abs(cur)))) break;
        v = cand;
        cur = next;
      } catch (const std::exception&) {
        break;
      }
    }
  }

  const RemlTerms terms = reml_terms(design, v, summary);
  Vector se = Vector::Constant(k + nv, kNaN);
  try {
    Eigen::FullPivLU<Matrix> beta_lu(terms.xtvx);
    se.head(k) = beta_lu.inverse().diagonal().cwiseSqrt();
    Eigen::FullPivLU<Matrix> lu(neg_hessian(v));
    lu.setThreshold(1e-12);
    if (lu.isInvertible()) {
      const Vector d = lu.inverse().diagonal();
      for (int a = 0; a < nv; ++a) se[k + a] = d[a] >= 0.0 ? std::sqrt(d[a]) : kNaN;
    }
  } catch (const std::exception&) {
  }

  Vector theta(k + nv);
  theta << terms.beta, v;
  std::vector<std::string> names;
  for (int a = 0; a < k; ++a) names.push_back("beta" + std::to_string(a + 1));
  for (int a = 0; a < k; ++a) names.push_back("psi" + std::to_string(a + 1) + std::to_string(a + 1));
  for (int a = 1; a < k; ++a)
    for (int b = 0; b < a; ++b) names.push_back("psi" + std::to_string(b + 1) + std::to_string(a + 1));
  names.push_back("sigma2");

  FitResult fit;
  fit.estimator = Estimator::REML;
  fit.theta_hat = ParamVector{theta, names};
  fit.se = se;
  fit.loglik = terms.value;
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.message = res.message;
  fit.acceptable = fit.converged && se.allFinite();
  fit.rejection_reason = !fit.converged ? RejectionReason::NoConvergence
                         : fit.acceptable ? RejectionReason::None
                                          : RejectionReason::SeOutOfRange;
  fit.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

FitResult fit_reml_gcm(const Dataset& data, const FitOptions& options) {
  const ModelSpec spec = presets::gcm();
  const Matrix design = spec.pattern(MatrixId::Lambda).fixed_part();
  FitResult fit = fit_reml_growth(design, data, options);
  const double wall = fit.wall_time;
  // Parameter order already matches the preset: alpha, psi11, psi22, psi12, theta11.
  fit.theta_hat = ParamVector::of(spec, fit.theta_hat.values);
  fit = check_acceptable(std::move(fit), spec, spec.se_threshold());
  fit.wall_time = wall;
  return fit;
}

double lmm_marginal_loglik_gcm(const Vector& theta, const Dataset& data) {
  const ModelSpec spec = presets::gcm();
  if (theta.size() != static_cast<Eigen::Index>(spec.free_count())) throw std::invalid_argument("gcm has six parameters");
  const Matrix lambda = spec.pattern(MatrixId::Lambda).fixed_part();
  const Eigen::Index t = lambda.rows(), k = lambda.cols(), n = data.rows();
  if (data.cols() != t) throw std::invalid_argument("gcm data needs ten occasions");
  const Eigen::Index big = n * t;

  const ModelMatrices mats = unpack(spec, theta);
  Vector y(big);
  Matrix x(big, k);
  Matrix z = Matrix::Zero(big, n * k);
  Matrix g = Matrix::Zero(n * k, n * k);
  for (Eigen::Index i = 0; i < n; ++i) {
    y.segment(i * t, t) = data.row(i).transpose();
    x.block(i * t, 0, t, k) = lambda;
    z.block(i * t, i * k, t, k) = lambda;
    g.block(i * k, i * k, k, k) = mats.psi;
  }
  Matrix v = z * g * z.transpose();
  v.diagonal().array() += mats.theta(0, 0);
  Eigen::LLT<Matrix> llt(v);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("marginal covariance is not positive definite");
  const Vector r = y - x * mats.alpha;
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (static_cast<double>(big) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

}  // namespace rbmsem
