#pragma once

#include "rbmsem/model.hpp"

namespace rbmsem {

/// Rows are observations, columns are indicators.
using Dataset = Matrix;

struct DataSummary {
  int n = 0;
  Vector ybar;
  Matrix s;  // biased divisor n
};

DataSummary summarize(const Dataset& data);

struct ScoreBlocks {
  Vector l_mu;     // Sigma^-1 (ybar - mu); zero without a mean structure
  Matrix l_sigma;  // Sigma^-1 C Sigma^-1 - Sigma^-1, C = S + (ybar-mu)(ybar-mu)^T
};

struct InfoMatrices {
  Matrix j;         // negative Hessian
  Matrix e;         // summed outer products of per-observation scores
  Matrix sandwich;  // j^-1 e j^-1
};

enum class ScoreRoute { Analytic, Numeric };

/// Normal-theory log-likelihood. Without a mean structure the quadratic mean
/// term is dropped, which is the same as profiling free intercepts at ybar.
/// Throws NotPositiveDefinite when Sigma has no Cholesky factor.
double loglik(const ModelSpec& spec, const Vector& theta, const DataSummary& data);

/// Per-observation terms l_i. Without a mean structure each row is centred at
/// the sample mean.
Vector loglik_contributions(const ModelSpec& spec, const Vector& theta, const Dataset& data);

ScoreBlocks score_blocks(const ModelSpec& spec, const Vector& theta, const DataSummary& data);

/// Analytic gradient of loglik via the chain rule through mu and Sigma.
Vector score_general(const ModelSpec& spec, const Vector& theta, const DataSummary& data);

/// Closed-form scores of the two_factor preset (centred data).
Vector score_two_factor(const Vector& theta, const DataSummary& data);

/// Closed-form scores of the gcm preset.
Vector score_gcm(const Vector& theta, const DataSummary& data);

/// d mu / d theta_a and d Sigma / d theta_a assembled from structure matrices.
struct MomentDerivatives {
  std::vector<Vector> dmu;
  std::vector<Matrix> dsigma;
};
MomentDerivatives moment_derivatives(const ModelSpec& spec, const ModelState& state);

/// n x m matrix of per-observation gradients.
Matrix observation_scores(const ModelSpec& spec, const Vector& theta, const Dataset& data,
                          ScoreRoute route = ScoreRoute::Analytic);

/// Central differences of the analytic score; the raw (unsymmetrized) matrix
/// is returned through `raw` when requested.
Matrix info_j(const ModelSpec& spec, const Vector& theta, const DataSummary& data, Matrix* raw = nullptr);

Matrix info_e(const ModelSpec& spec, const Vector& theta, const Dataset& data,
              ScoreRoute route = ScoreRoute::Analytic);

InfoMatrices info_matrices(const ModelSpec& spec, const Vector& theta, const Dataset& data);

Matrix sandwich(const Matrix& j, const Matrix& e);

/// Square roots of diag(j^-1 e j^-1). Throws SingularMatrix when j cannot be
/// factorized and std::domain_error on a negative diagonal.
Vector sandwich_se(const Matrix& j, const Matrix& e);
Vector sandwich_se(const ModelSpec& spec, const Vector& theta, const Dataset& data);

}  // namespace rbmsem
