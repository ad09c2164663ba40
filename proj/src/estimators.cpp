#include "rbmsem/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "rbmsem/errors.hpp"
#include "rbmsem/numdiff.hpp"
#include "rbmsem/seeding.hpp"

namespace rbmsem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool sigma_pd(const ModelSpec& spec, const Vector& theta) {
  try {
    const Matrix sigma = implied_moments(spec, theta).sigma;
    if (!sigma.allFinite()) return false;
    Eigen::LLT<Matrix> llt(sigma);
    return llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all();
  } catch (const std::domain_error&) {
    return false;
  }
}

Vector safe_se(const ModelSpec& spec, const Vector& theta, const Dataset& data, const DataSummary& summary) {
  try {
    return sandwich_se(info_j(spec, theta, summary), info_e(spec, theta, data));
  } catch (const std::exception&) {
    return Vector::Constant(static_cast<Eigen::Index>(spec.free_count()), kNaN);
  }
}

double safe_loglik(const ModelSpec& spec, const Vector& theta, const DataSummary& summary) {
  try {
    return loglik(spec, theta, summary);
  } catch (const std::domain_error&) {
    return kNaN;
  }
}

void check_bounds(const ModelSpec& spec, const BoundsPolicy& bounds) {
  const auto m = static_cast<Eigen::Index>(spec.free_count());
  if (bounds.lower.size() != m || bounds.upper.size() != m)
    throw std::invalid_argument("bounds do not match the number of free parameters");
  for (Eigen::Index a = 0; a < m; ++a)
    if (!(bounds.lower[a] <= bounds.upper[a])) throw std::invalid_argument("lower bound exceeds upper bound");
}

Vector clamp_inside(const Vector& x, const BoundsPolicy& bounds) {
  Vector out = x;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const double lo = bounds.lower[a], hi = bounds.upper[a];
    const double margin = std::isfinite(hi - lo) ? 1e-3 * (hi - lo) : 0.0;
    out[a] = std::clamp(x[a], lo + margin, hi - margin);
  }
  return out;
}

bool interior(const Vector& x, const BoundsPolicy& bounds) {
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const double tol = 1e-10 * std::max(1.0, std::abs(x[a]));
    if (x[a] <= bounds.lower[a] + tol || x[a] >= bounds.upper[a] - tol) return false;
  }
  return true;
}

Vector jitter(const Vector& x, const BoundsPolicy& bounds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector out = x;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const double v = u(rng);
    out[a] = x[a] == 0.0 ? 0.1 * v : x[a] * (1.0 + 0.25 * v);
  }
  return clamp_inside(out, bounds);
}

using GradientFn = std::function<Vector(const Vector&)>;
using ValueFn = std::function<double(const Vector&)>;

// Newton-type refinement x <- x + j^-1 g on an interior solution; each step
// must stay inside the box and not decrease the objective.
Vector polish(Vector x, const BoundsPolicy& bounds, const ValueFn& value, const GradientFn& grad,
              const std::function<Matrix(const Vector&)>& info, int max_steps) {
  if (!interior(x, bounds)) return x;
  double v = value(x);
  for (int k = 0; k < max_steps; ++k) {
    Vector step;
    try {
      const Matrix j = info(x);
      Eigen::LLT<Matrix> llt(j);
      if (llt.info() != Eigen::Success) break;
      step = llt.solve(grad(x));
    } catch (const std::exception&) {
      break;
    }
    if (!step.allFinite()) break;
    const Vector cand = x + step;
    if (!interior(cand, bounds)) break;
    double v_new;
    try {
      v_new = value(cand);
    } catch (const std::domain_error&) {
      break;
    }
    if (!std::isfinite(v_new) || v_new < v - 1e-10 * std::max(1.0, std::abs(v))) break;
    x = cand;
    v = v_new;
    double rel = 0.0;
    for (Eigen::Index a = 0; a < x.size(); ++a) rel = std::max(rel, std::abs(step[a]) / std::max(1.0, std::abs(x[a])));
    if (rel < 1e-13) break;
  }
  return x;
}

// Runs the optimizer from `start` and from up to `restarts` jittered starts
// until one converges; returns the converged run or the best failure.
OptimResult multistart(const Objective& f, const Vector& start, const BoundsPolicy& bounds, const FitOptions& options,
                       bool* any_feasible) {
  OptimResult best;
  bool have_best = false;
  *any_feasible = false;
  for (int k = 0; k <= std::max(0, options.restarts); ++k) {
    const Vector x0 = k == 0 ? start : jitter(start, bounds, substream(options.seed, {static_cast<std::uint64_t>(k)}));
    OptimOptions opt = options.optim;
    if (opt.scale.size() != x0.size()) opt.scale = x0.cwiseAbs().cwiseMax(1.0);
    OptimResult r = minimize_box(f, x0, bounds.lower, bounds.upper, opt);
    if (std::isfinite(r.value)) *any_feasible = true;
    if (r.converged) return r;
    if (!have_best || r.value < best.value) {
      best = std::move(r);
      have_best = true;
    }
  }
  return best;
}

Objective negative_loglik(const ModelSpec& spec, const DataSummary& summary) {
  const double n = summary.n;
  return [&spec, &summary, n](const Vector& x, Vector* grad) -> double {
    try {
      const double v = -loglik(spec, x, summary) / n;
      if (grad) *grad = -score_general(spec, x, summary) / n;
      return v;
    } catch (const std::domain_error&) {
      return kInf;
    }
  };
}

double penalty_at(const ModelSpec& spec, const Vector& theta, const Dataset& data, const DataSummary& summary) {
  return rbm_penalty(info_j(spec, theta, summary), info_e(spec, theta, data));
}

// iRBM works on the region where j is positive definite, the region holding
// the ML estimate. Across det j = 0 the trace term changes sign and P is
// unbounded above, so the optimizer would otherwise run off to degenerate
// points.
double penalty_on_domain(const ModelSpec& spec, const Vector& theta, const Dataset& data,
                         const DataSummary& summary) {
  const Matrix j = info_j(spec, theta, summary);
  Eigen::LLT<Matrix> llt(j);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("j is not positive definite");
  return rbm_penalty(j, info_e(spec, theta, data));
}

// P carries the ~1e-10 relative noise of the differenced j, so its gradient
// uses the step that balances that noise against truncation, noise^(1/3).
constexpr double kPenaltyStep = 5e-4;

Vector penalty_gradient_at(const ModelSpec& spec, const Vector& theta, const Dataset& data,
                           const DataSummary& summary) {
  const Matrix jac = numdiff::jacobian(
      [&](const Vector& t) { return Vector::Constant(1, penalty_at(spec, t, data, summary)); }, theta, kPenaltyStep);
  return jac.row(0).transpose();
}

Vector penalty_on_domain_gradient(const ModelSpec& spec, const Vector& theta, const Dataset& data,
                                  const DataSummary& summary) {
  const Matrix jac = numdiff::jacobian(
      [&](const Vector& t) { return Vector::Constant(1, penalty_on_domain(spec, t, data, summary)); }, theta,
      kPenaltyStep);
  return jac.row(0).transpose();
}

}  // namespace

std::string_view estimator_name(Estimator est) {
  switch (est) {
    case Estimator::ML: return "ml";
    case Estimator::ERBM: return "erbm";
    case Estimator::IRBM: return "irbm";
    case Estimator::Boot: return "boot";
    case Estimator::Jack: return "jack";
    case Estimator::REML: return "reml";
  }
  return "?";
}

Estimator parse_estimator(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "ml") return Estimator::ML;
  if (t == "erbm") return Estimator::ERBM;
  if (t == "irbm") return Estimator::IRBM;
  if (t == "boot" || t == "bootstrap") return Estimator::Boot;
  if (t == "jack" || t == "jackknife") return Estimator::Jack;
  if (t == "reml") return Estimator::REML;
  throw std::invalid_argument("unknown estimator '" + std::string(text) + "'");
}

std::string_view rejection_name(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::None: return "none";
    case RejectionReason::NoConvergence: return "no_convergence";
    case RejectionReason::SigmaNotPD: return "sigma_not_pd";
    case RejectionReason::SeOutOfRange: return "se_out_of_range";
  }
  return "?";
}

nlohmann::json to_json(const FitResult& fit) {
  auto vec = [](const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index a = 0; a < v.size(); ++a) arr.push_back(std::isfinite(v[a]) ? nlohmann::json(v[a]) : nlohmann::json());
    return arr;
  };
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::json j;
  j["estimator"] = estimator_name(fit.estimator);
  j["parameters"] = fit.theta_hat.names;
  j["theta_hat"] = vec(fit.theta_hat.values);
  j["se"] = vec(fit.se);
  j["loglik"] = num(fit.loglik);
  j["penalty"] = num(fit.penalty);
  j["converged"] = fit.converged;
  j["acceptable"] = fit.acceptable;
  j["rejection_reason"] = rejection_name(fit.rejection_reason);
  j["iterations"] = fit.iterations;
  j["wall_time"] = fit.wall_time;
  j["nu_hat"] = fit.nu_hat ? vec(*fit.nu_hat) : nlohmann::json();
  j["replicates_used"] = fit.replicates_used;
  j["replicates_failed"] = fit.replicates_failed;
  j["message"] = fit.message;
  return j;
}

BoundsPolicy default_bounds(const ModelSpec& spec, const DataSummary& data) {
  const int p = spec.p(), q = spec.q();
  if (data.ybar.size() != p || data.s.rows() != p) throw std::invalid_argument("data summary does not match the model");
  const Vector var = data.s.diagonal();
  for (int i = 0; i < p; ++i)
    if (!(var[i] > 0.0) || !std::isfinite(var[i]))
      throw std::invalid_argument("indicator " + std::to_string(i + 1) + " has zero variance");
  const Vector sd = var.cwiseSqrt();

  // Scale anchor of each latent variable: its first indicator with a fixed
  // nonzero loading.
  const MatrixPattern& lam = spec.pattern(MatrixId::Lambda);
  std::vector<int> anchor(static_cast<std::size_t>(q), -1);
  for (int k = 0; k < q; ++k)
    for (int i = 0; i < p && anchor[static_cast<std::size_t>(k)] < 0; ++i)
      if (!lam.at(i, k).is_free() && lam.at(i, k).value != 0.0) anchor[static_cast<std::size_t>(k)] = i;

  auto psi_upper = [&](int k) {
    double ub = 0.0;
    bool found = false;
    for (int i = 0; i < p; ++i) {
      const CellTag& c = lam.at(i, k);
      if (!c.is_free() && c.value != 0.0) {
        ub = std::max(ub, 2.0 * var[i] / (c.value * c.value));
        found = true;
      }
    }
    if (!found)
      for (int i = 0; i < p; ++i)
        if (lam.at(i, k).is_free()) ub = std::max(ub, 2.0 * var[i]);
    return ub > 0.0 ? ub : 2.0 * var.maxCoeff();
  };
  auto anchor_sd = [&](int k) {
    const int a = anchor[static_cast<std::size_t>(k)];
    return a >= 0 ? sd[a] : 1.0;
  };

  const auto m = static_cast<Eigen::Index>(spec.free_count());
  BoundsPolicy out{Vector(m), Vector(m)};
  const double big_mean = data.ybar.cwiseAbs().maxCoeff() + 10.0 * sd.maxCoeff();
  for (Eigen::Index a = 0; a < m; ++a) {
    const FreeParameter& par = spec.parameters()[static_cast<std::size_t>(a)];
    double lo = kInf, hi = -kInf;
    for (const auto& [i, j] : par.cells) {
      double l = 0.0, h = 0.0;
      switch (par.matrix) {
        case MatrixId::Nu:
          l = data.ybar[i] - 10.0 * sd[i];
          h = data.ybar[i] + 10.0 * sd[i];
          break;
        case MatrixId::Lambda: {
          const double r = 10.0 * sd[i] / anchor_sd(j);
          l = -r;
          h = r;
          break;
        }
        case MatrixId::Theta:
          if (i == j) {
            h = 2.0 * var[i];
          } else {
            h = 2.0 * std::sqrt(var[i] * var[j]);
            l = -h;
          }
          break;
        case MatrixId::Alpha:
          l = -big_mean;
          h = big_mean;
          break;
        case MatrixId::B: {
          const bool anchored = anchor[static_cast<std::size_t>(i)] >= 0 && anchor[static_cast<std::size_t>(j)] >= 0;
          const double r = anchored ? 10.0 * anchor_sd(i) / anchor_sd(j) : 10.0;
          l = -r;
          h = r;
          break;
        }
        case MatrixId::Psi:
          if (i == j) {
            h = psi_upper(i);
          } else {
            h = std::sqrt(psi_upper(i) * psi_upper(j));
            l = -h;
          }
          break;
      }
      // Shared parameters must fit every cell they occupy.
      if (lo == kInf) {
        lo = l;
        hi = h;
      } else {
        lo = std::max(lo, l);
        hi = std::min(hi, h);
      }
    }
    out.lower[a] = std::max(lo, par.lower);
    out.upper[a] = std::min(hi, par.upper);
    if (out.lower[a] > out.upper[a]) out.lower[a] = out.upper[a];
  }
  return out;
}

Vector start_values(const ModelSpec& spec, const DataSummary& data, const BoundsPolicy& bounds) {
  const int p = spec.p(), q = spec.q();
  ModelMatrices mats;
  mats.nu = spec.pattern(MatrixId::Nu).fixed_part();
  mats.lambda = spec.pattern(MatrixId::Lambda).fixed_part();
  mats.theta = spec.pattern(MatrixId::Theta).fixed_part();
  mats.alpha = spec.pattern(MatrixId::Alpha).fixed_part();
  mats.b = spec.pattern(MatrixId::B).fixed_part();
  mats.psi = spec.pattern(MatrixId::Psi).fixed_part();

  const auto& pn = spec.pattern(MatrixId::Nu);
  const auto& pl = spec.pattern(MatrixId::Lambda);
  const auto& pt = spec.pattern(MatrixId::Theta);
  const auto& pa = spec.pattern(MatrixId::Alpha);
  const auto& pp = spec.pattern(MatrixId::Psi);
  for (int i = 0; i < p; ++i) {
    if (pn.at(i, 0).is_free()) mats.nu[i] = data.ybar[i];
    for (int k = 0; k < q; ++k)
      if (pl.at(i, k).is_free()) mats.lambda(i, k) = 1.0;
    if (pt.at(i, i).is_free()) mats.theta(i, i) = 0.5 * data.s(i, i);
  }
  // A parameter shared by several cells starts at their average.
  auto share = [&](const MatrixPattern& pat, auto& mat) {
    std::map<int, std::pair<double, int>> acc;
    for (int i = 0; i < pat.rows(); ++i)
      for (int j = 0; j < pat.cols(); ++j)
        if (pat.at(i, j).is_free()) {
          auto& [sum, count] = acc[pat.at(i, j).index];
          sum += mat(i, j);
          ++count;
        }
    for (int i = 0; i < pat.rows(); ++i)
      for (int j = 0; j < pat.cols(); ++j)
        if (pat.at(i, j).is_free()) {
          const auto& [sum, count] = acc[pat.at(i, j).index];
          mat(i, j) = sum / count;
        }
  };
  share(pn, mats.nu);
  share(pt, mats.theta);

  // Psi by least squares on the lower triangle of S - Theta = Lambda Psi Lambda'.
  if (q > 0) {
    std::vector<std::pair<int, int>> cells;
    for (int k = 0; k < q; ++k)
      for (int l = 0; l <= k; ++l)
        if (pp.at(k, l).is_free()) cells.emplace_back(k, l);
    if (!cells.empty()) {
      const Matrix target = data.s - mats.theta - mats.lambda * mats.psi * mats.lambda.transpose();
      const int rows = p * (p + 1) / 2;
      Matrix design(rows, static_cast<Eigen::Index>(cells.size()));
      Vector rhs(rows);
      int r = 0;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j <= i; ++j, ++r) {
          rhs[r] = target(i, j);
          for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto [k, l] = cells[c];
            const Matrix d = mats.lambda * structure_matrix(k, l, q, q, true) * mats.lambda.transpose();
            design(r, static_cast<Eigen::Index>(c)) = d(i, j);
          }
        }
      const Vector sol = design.completeOrthogonalDecomposition().solve(rhs);
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto [k, l] = cells[c];
        mats.psi(k, l) = mats.psi(l, k) = sol[static_cast<Eigen::Index>(c)];
      }
      const double floor = 0.05 * data.s.diagonal().mean();
      for (int k = 0; k < q; ++k)
        if (pp.at(k, k).is_free() && !(mats.psi(k, k) > floor)) mats.psi(k, k) = floor;
      for (const auto& [k, l] : cells) {
        if (k == l) continue;
        const double lim = 0.9 * std::sqrt(mats.psi(k, k) * mats.psi(l, l));
        mats.psi(k, l) = mats.psi(l, k) = std::clamp(mats.psi(k, l), -lim, lim);
      }
    }

    // Latent means by least squares on ybar - nu = Lambda alpha (B starts at 0).
    std::vector<int> free_alpha;
    for (int k = 0; k < q; ++k)
      if (pa.at(k, 0).is_free()) free_alpha.push_back(k);
    if (!free_alpha.empty()) {
      const Vector rhs = data.ybar - mats.nu - mats.lambda * mats.alpha;
      Matrix design(p, static_cast<Eigen::Index>(free_alpha.size()));
      for (std::size_t c = 0; c < free_alpha.size(); ++c) design.col(static_cast<Eigen::Index>(c)) = mats.lambda.col(free_alpha[c]);
      const Vector sol = design.completeOrthogonalDecomposition().solve(rhs);
      for (std::size_t c = 0; c < free_alpha.size(); ++c) mats.alpha[free_alpha[c]] = sol[static_cast<Eigen::Index>(c)];
    }
  }

  // Free cells of B start at 0; pack reads every free slot.
  return clamp_inside(pack(spec, mats), bounds);
}

FitResult check_acceptable(FitResult fit, const ModelSpec& spec, double threshold) {
  fit.acceptable = false;
  if (!fit.converged) {
    fit.rejection_reason = RejectionReason::NoConvergence;
    return fit;
  }
  const Vector& theta = fit.theta_hat.values;
  if (!theta.allFinite() || !sigma_pd(spec, theta)) {
    fit.rejection_reason = RejectionReason::SigmaNotPD;
    return fit;
  }
  if (fit.se.size() != theta.size()) {
    fit.rejection_reason = RejectionReason::SeOutOfRange;
    return fit;
  }
  for (Eigen::Index a = 0; a < fit.se.size(); ++a) {
    if (!std::isfinite(fit.se[a]) || !(fit.se[a] < threshold)) {
      fit.rejection_reason = RejectionReason::SeOutOfRange;
      return fit;
    }
  }
  fit.acceptable = true;
  fit.rejection_reason = RejectionReason::None;
  return fit;
}

FitResult fit_ml(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds, const FitOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  check_bounds(spec, bounds);
  const DataSummary summary = summarize(data);
  const Vector start = options.start ? clamp_inside(*options.start, bounds) : start_values(spec, summary, bounds);

  bool feasible = false;
  OptimResult opt = multistart(negative_loglik(spec, summary), start, bounds, options, &feasible);
  if (!feasible) throw std::runtime_error("implied covariance is not positive definite at any start value");

  Vector x = opt.x;
  if (opt.converged && options.polish) {
    x = polish(
        x, bounds, [&](const Vector& t) { return loglik(spec, t, summary); },
        [&](const Vector& t) { return score_general(spec, t, summary); },
        [&](const Vector& t) { return info_j(spec, t, summary); }, 3);
  }

  FitResult fit;
  fit.estimator = Estimator::ML;
  fit.theta_hat = ParamVector::of(spec, x);
  fit.loglik = safe_loglik(spec, x, summary);
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.message = opt.message;
  fit.se = safe_se(spec, x, data, summary);
  if (!spec.mean_structure()) fit.nu_hat = summary.ybar;
  fit = check_acceptable(std::move(fit), spec, spec.se_threshold());
  fit.wall_time = seconds_since(t0);
  return fit;
}

double rbm_penalty(const Matrix& j, const Matrix& e) {
  if (j.rows() != j.cols() || e.rows() != j.rows() || e.cols() != j.cols())
    throw std::invalid_argument("penalty needs square j and e of equal size");
  if (j.size() == 0) return 0.0;
  Eigen::FullPivLU<Matrix> lu(j);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw SingularMatrix("negative Hessian is singular");
  return -0.5 * lu.solve(e).trace();
}

double rbm_penalty(const ModelSpec& spec, const Vector& theta, const Dataset& data) {
  return penalty_at(spec, theta, data, summarize(data));
}

Vector rbm_penalty_gradient(const ModelSpec& spec, const Vector& theta, const Dataset& data) {
  return penalty_gradient_at(spec, theta, data, summarize(data));
}

FitResult fit_irbm(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds, const FitOptions& options,
                   const FitResult* ml) {
  const auto t0 = std::chrono::steady_clock::now();
  check_bounds(spec, bounds);
  const DataSummary summary = summarize(data);
  const double n = summary.n;

  Vector start;
  if (ml && ml->acceptable) {
    start = clamp_inside(ml->theta_hat.values, bounds);
  } else if (options.start) {
    start = clamp_inside(*options.start, bounds);
  } else {
    start = start_values(spec, summary, bounds);
  }

  const Objective f = [&](const Vector& x, Vector* grad) -> double {
    try {
      const double v = -(loglik(spec, x, summary) + penalty_on_domain(spec, x, data, summary)) / n;
      if (grad) *grad = -(score_general(spec, x, summary) + penalty_on_domain_gradient(spec, x, data, summary)) / n;
      return v;
    } catch (const std::domain_error&) {
      return kInf;
    } catch (const NumericalDifferentiationError&) {
      return kInf;
    }
  };

  // The default start can sit where j is indefinite; fall back to the ML
  // estimate, then to jittered copies of the default.
  if (!std::isfinite(f(start, nullptr))) {
    std::vector<Vector> candidates;
    if (ml && ml->converged) candidates.push_back(clamp_inside(ml->theta_hat.values, bounds));
    for (std::uint64_t k = 1; k <= 20; ++k)
      candidates.push_back(jitter(start, bounds, substream(options.seed, {0x5eedULL, k})));
    for (const Vector& c : candidates)
      if (std::isfinite(f(c, nullptr))) {
        start = c;
        break;
      }
  }

  bool feasible = false;
  OptimResult opt = multistart(f, start, bounds, options, &feasible);
  if (!feasible) throw std::runtime_error("penalized objective is infeasible at every start value");

  Vector x = opt.x;
  if (opt.converged && options.polish) {
    // j carries the O(n) curvature; the penalty Hessian is O(1) and dropped.
    x = polish(
        x, bounds, [&](const Vector& t) { return loglik(spec, t, summary) + penalty_on_domain(spec, t, data, summary); },
        [&](const Vector& t) { return Vector(score_general(spec, t, summary) + penalty_on_domain_gradient(spec, t, data, summary)); },
        [&](const Vector& t) { return info_j(spec, t, summary); }, 4);
  }

  FitResult fit;
  fit.estimator = Estimator::IRBM;
  fit.theta_hat = ParamVector::of(spec, x);
  fit.loglik = safe_loglik(spec, x, summary);
  try {
    fit.penalty = penalty_on_domain(spec, x, data, summary);
  } catch (const std::exception&) {
    fit.penalty = kNaN;
  }
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.message = opt.message;
  fit.se = safe_se(spec, x, data, summary);
  if (!spec.mean_structure()) fit.nu_hat = summary.ybar;
  fit = check_acceptable(std::move(fit), spec, spec.se_threshold());
  fit.wall_time = seconds_since(t0);
  return fit;
}

FitResult fit_erbm(const ModelSpec& spec, const Dataset& data, const FitResult& ml) {
  const auto t0 = std::chrono::steady_clock::now();
  const DataSummary summary = summarize(data);
  FitResult fit;
  fit.estimator = Estimator::ERBM;
  fit.nu_hat = ml.nu_hat;
  fit.converged = ml.converged;
  if (!ml.converged) {
    fit.theta_hat = ml.theta_hat;
    fit.se = Vector::Constant(ml.theta_hat.values.size(), kNaN);
    fit.loglik = kNaN;
    fit.rejection_reason = RejectionReason::NoConvergence;
    fit.message = "ML fit did not converge";
    fit.wall_time = ml.wall_time + seconds_since(t0);
    return fit;
  }
  const Vector& theta = ml.theta_hat.values;
  const Matrix j = info_j(spec, theta, summary);
  const Vector a = penalty_gradient_at(spec, theta, data, summary);
  Eigen::FullPivLU<Matrix> lu(j);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw SingularMatrix("negative Hessian at the ML estimate is singular");
  const Vector x = theta + lu.solve(a);

  fit.theta_hat = ParamVector::of(spec, x);
  fit.loglik = safe_loglik(spec, x, summary);
  fit.se = safe_se(spec, x, data, summary);
  fit = check_acceptable(std::move(fit), spec, spec.se_threshold());
  fit.wall_time = ml.wall_time + seconds_since(t0);
  return fit;
}

}  // namespace rbmsem
