#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rbmsem/likelihood.hpp"
#include "rbmsem/model.hpp"
#include "rbmsem/optimizer.hpp"

namespace rbmsem {

enum class Estimator { ML, ERBM, IRBM, Boot, Jack, REML };
enum class RejectionReason { None, NoConvergence, SigmaNotPD, SeOutOfRange };

std::string_view estimator_name(Estimator est);
Estimator parse_estimator(std::string_view text);
std::string_view rejection_name(RejectionReason reason);

struct FitResult {
  Estimator estimator = Estimator::ML;
  ParamVector theta_hat;
  Vector se;
  double loglik = 0.0;
  double penalty = 0.0;  // P at the estimate, iRBM only
  bool converged = false;
  bool acceptable = false;
  RejectionReason rejection_reason = RejectionReason::NoConvergence;
  int iterations = 0;
  double wall_time = 0.0;  // seconds

  // Intercepts profiled at the sample mean when the model has no mean structure.
  std::optional<Vector> nu_hat;
  // Resampling bookkeeping: replicates averaged and replicates dropped.
  int replicates_used = 0;
  int replicates_failed = 0;
  std::string message;
};

nlohmann::json to_json(const FitResult& fit);

struct BoundsPolicy {
  Vector lower;
  Vector upper;
};

/// Data-informed box: variances in [0, 2 * observed variance scale], loadings
/// and regressions within +-10 times the indicator sd ratio, covariances inside
/// the Cauchy-Schwarz box of their variance bounds. Intersected with any
/// bounds carried by the spec.
BoundsPolicy default_bounds(const ModelSpec& spec, const DataSummary& data);

/// Moment-based starting point, clamped inside `bounds`.
Vector start_values(const ModelSpec& spec, const DataSummary& data, const BoundsPolicy& bounds);

enum class Parallelism { Serial, OpenMP };

struct FitOptions {
  std::optional<Vector> start;
  int restarts = 3;
  std::uint64_t seed = 0;  // jitter for restarts
  OptimOptions optim;
  bool polish = true;      // Newton refinement of interior solutions
};

/// Screens a fit: converged, Sigma positive definite with admissible
/// variance components, every SE finite and below `threshold`.
FitResult check_acceptable(FitResult fit, const ModelSpec& spec, double threshold);

FitResult fit_ml(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                 const FitOptions& options = {});

/// P(theta) = -tr(j^-1 e) / 2, evaluated with a linear solve.
double rbm_penalty(const ModelSpec& spec, const Vector& theta, const Dataset& data);
double rbm_penalty(const Matrix& j, const Matrix& e);

/// Central-difference gradient of the penalty.
Vector rbm_penalty_gradient(const ModelSpec& spec, const Vector& theta, const Dataset& data);

/// Maximizes loglik + P inside the bounds. Starts from `ml` when it is
/// acceptable, otherwise from the moment-based start.
FitResult fit_irbm(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                   const FitOptions& options = {}, const FitResult* ml = nullptr);

/// One-step correction theta + j^-1 A(theta) from a converged ML fit.
FitResult fit_erbm(const ModelSpec& spec, const Dataset& data, const FitResult& ml);

struct TrimQuantiles {
  double lower = 0.005;
  double upper = 0.995;
};

struct ResampleOptions {
  int replicates = 200;  // bootstrap T
  std::uint64_t seed = 1;
  std::optional<TrimQuantiles> trim;
  bool strict = false;  // reject when any resample is unacceptable
  Parallelism parallelism = Parallelism::OpenMP;
  FitOptions fit;
};

FitResult bootstrap_correct(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                            const ResampleOptions& options = {});

/// Bootstrap over caller-supplied resamples (row indices per replicate).
FitResult bootstrap_correct_indices(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                                    const std::vector<std::vector<int>>& resamples,
                                    const ResampleOptions& options = {});

FitResult jackknife_correct(const ModelSpec& spec, const Dataset& data, const BoundsPolicy& bounds,
                            const ResampleOptions& options = {});

/// Restricted ML for a balanced growth model: every subject shares the
/// T x k design `design` for fixed and random effects, random effects have a
/// free k x k covariance and residuals a common variance. Parameters are
/// ordered (beta_1..k, psi diagonal, psi lower off-diagonals row-major,
/// sigma^2). The restricted log-likelihood omits its 2*pi constant.
FitResult fit_reml_growth(const Matrix& design, const Dataset& data, const FitOptions& options = {});
double reml_loglik_growth(const Matrix& design, const Vector& variance_params, const Dataset& data);

/// Restricted ML for the gcm preset; estimates follow the preset order.
FitResult fit_reml_gcm(const Dataset& data, const FitOptions& options = {});

/// Long-format marginal log-likelihood of the growth model written as a
/// linear mixed model, computed on the stacked N x N covariance.
double lmm_marginal_loglik_gcm(const Vector& theta, const Dataset& data);

}  // namespace rbmsem
