#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "rbmsem/estimators.hpp"
#include "rbmsem/seeding.hpp"

namespace rbmsem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Replicate {
  Vector theta;
  bool ok = false;
};

Dataset take_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = data.row(rows[r]);
  return out;
}

Replicate refit(const ModelSpec& spec, const Dataset& sample, const BoundsPolicy& bounds, const FitOptions& base,
                const Vector& warm) {
  Replicate rep;
  try {
    FitOptions opt = base;
    opt.start = warm;
    const FitResult f = fit_ml(spec, sample, bounds, opt);
    rep.ok = f.acceptable;
    rep.theta = f.theta_hat.values;
  } catch (const std::exception&) {
    rep.ok = false;
  }
  return rep;
}

// Fits every replicate; replicate k only depends on `make_sample(k)`, so the
// serial and parallel paths agree exactly.
template <class MakeSample>
std::vector<Replicate> run_replicates(int count, const MakeSample& make_sample, const ModelSpec& spec,
                                      const BoundsPolicy& bounds, const FitOptions& fit, const Vector& warm,
                                      Parallelism par) {
  std::vector<Replicate> reps(static_cast<std::size_t>(count));
  if (par == Parallelism::OpenMP) {
#if defined(RBMSEM_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
    for (int k = 0; k < count; ++k) reps[static_cast<std::size_t>(k)] = refit(spec, make_sample(k), bounds, fit, warm);
  } else {
    for (int k = 0; k < count; ++k) reps[static_cast<std::size_t>(k)] = refit(spec, make_sample(k), bounds, fit, warm);
  }
  return reps;
}

// Linear-interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double prob) {
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

FitResult rejected(Estimator est, const FitResult& ml, std::string why) {
  FitResult out = ml;
  out.estimator = est;
  out.converged = false;
  out.acceptable = false;
  out.rejection_reason = RejectionReason::NoConvergence;
  out.se = Vector::Constant(ml.theta_hat.values.size(), kNaN);
  out.message = std::move(why);
  return out;
}

FitResult finish(FitResult out, const ModelSpec& spec, const Dataset& data) {
  try {
    out.loglik = loglik(spec, out.theta_hat.values, summarize(data));
  } catch (const std::domain_error&) {
    out.loglik = kNaN;
  }
  return check_acceptable(std::move(out), spec, spec.se_threshold());
}

FitResult bootstrap_from(const ModelSpec& spec, const Dataset& data, const FitResult& ml,
                         const std::vector<Replicate>& reps, const ResampleOptions& options) {
  const Eigen::Index m = ml.theta_hat.values.size();
  std::vector<const Vector*> good;
  for (const auto& r : reps)
    if (r.ok) good.push_back(&r.theta);
  const int failed = static_cast<int>(reps.size() - good.size());
  if (good.empty()) return rejected(Estimator::Boot, ml, "all bootstrap resamples unacceptable");
  if (options.strict && failed > 0) {
    FitResult out = rejected(Estimator::Boot, ml, "unacceptable bootstrap resample under strict screening");
    out.replicates_used = static_cast<int>(good.size());
    out.replicates_failed = failed;
    return out;
  }
  Vector mean(m), se(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    std::vector<double> vals;
    vals.reserve(good.size());
    for (const Vector* t : good) vals.push_back((*t)[a]);
    if (options.trim && vals.size() > 1) {
      std::vector<double> sorted = vals;
      std::sort(sorted.begin(), sorted.end());
      const double lo = quantile(sorted, options.trim->lower);
      const double hi = quantile(sorted, options.trim->upper);
      std::vector<double> kept;
      for (double v : vals)
        if (v >= lo && v <= hi) kept.push_back(v);
      vals.swap(kept);
    }
    double s = 0.0;
    for (double v : vals) s += v;
    mean[a] = s / static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mean[a]) * (v - mean[a]);
    se[a] = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : kNaN;
  }

  FitResult out;
  out.estimator = Estimator::Boot;
  out.theta_hat = ParamVector::of(spec, 2.0 * ml.theta_hat.values - mean);
  out.se = se;
  out.converged = ml.converged;
  out.iterations = ml.iterations;
  out.nu_hat = ml.nu_hat;
  out.replicates_used = static_cast<int>(good.size());
  out.replicates_failed = failed;
  return finish(std::move(out), spec, data);
}

}  // namespace

FitResult bootstrap_correct_indices(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                                    const std::vector<std::vector<int>>& resamples, const ResampleOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  if (resamples.empty()) throw std::invalid_argument("bootstrap needs at least one resample");
  for (const auto& rows : resamples)
    for (int r : rows)
      if (r < 0 || r >= data.rows()) throw std::out_of_range("bootstrap resample row out of range");
  const FitResult ml = fit_ml(spec, data, bounds, options.fit);
  FitResult out;
  if (!ml.acceptable) {
    out = rejected(Estimator::Boot, ml, "ML fit on the full sample unacceptable");
  } else {
    const auto reps = run_replicates(
        static_cast<int>(resamples.size()),
        [&](int k) { return take_rows(data, resamples[static_cast<std::size_t>(k)]); }, spec, bounds, options.fit,
        ml.theta_hat.values, options.parallelism);
    out = bootstrap_from(spec, data, ml, reps, options);
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

FitResult bootstrap_correct(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                            const ResampleOptions& options) {
  if (options.replicates < 1) throw std::invalid_argument("bootstrap needs T >= 1");
  const auto n = static_cast<int>(data.rows());
  std::vector<std::vector<int>> resamples(static_cast<std::size_t>(options.replicates));
  for (int t = 0; t < options.replicates; ++t) {
    std::mt19937_64 rng(substream(options.seed, {static_cast<std::uint64_t>(t)}));
    std::uniform_int_distribution<int> pick(0, n - 1);
    auto& rows = resamples[static_cast<std::size_t>(t)];
    rows.resize(static_cast<std::size_t>(n));
    for (int& r : rows) r = pick(rng);
  }
  return bootstrap_correct_indices(spec, data, bounds, resamples, options);
}

FitResult jackknife_correct(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                            const ResampleOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<int>(data.rows());
  const auto m = static_cast<int>(spec.free_count());
  if (n < m + 2) throw std::invalid_argument("jackknife needs n >= m + 2");
  const FitResult ml = fit_ml(spec, data, bounds, options.fit);
  FitResult out;
  if (!ml.acceptable) {
    out = rejected(Estimator::Jack, ml, "ML fit on the full sample unacceptable");
  } else {
    auto leave_out = [&](int i) {
      Dataset d(n - 1, data.cols());
      if (i > 0) d.topRows(i) = data.topRows(i);
      if (i < n - 1) d.bottomRows(n - 1 - i) = data.bottomRows(n - 1 - i);
      return d;
    };
    const auto reps =
        run_replicates(n, leave_out, spec, bounds, options.fit, ml.theta_hat.values, options.parallelism);
    int good = 0;
    Vector sum = Vector::Zero(m);
    for (const auto& r : reps)
      if (r.ok) {
        sum += r.theta;
        ++good;
      }
    const int failed = n - good;
    if (good == 0 || failed > n / 5) {
      out = rejected(Estimator::Jack, ml, "too many unacceptable leave-one-out fits");
      out.replicates_used = good;
      out.replicates_failed = failed;
    } else {
      const Vector mean = sum / good;
      Vector ss = Vector::Zero(m);
      for (const auto& r : reps)
        if (r.ok) ss += (r.theta - mean).cwiseAbs2();
      out.estimator = Estimator::Jack;
      out.theta_hat = ParamVector::of(spec, n * ml.theta_hat.values - (n - 1) * mean);
      out.se = (ss * (static_cast<double>(n - 1) / good)).cwiseSqrt();
      out.converged = ml.converged;
      out.iterations = ml.iterations;
      out.nu_hat = ml.nu_hat;
      out.replicates_used = good;
      out.replicates_failed = failed;
      out = finish(std::move(out), spec, data);
    }
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace rbmsem
