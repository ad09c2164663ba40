#pragma once

#include <random>
#include <string>
#include <vector>

#include "rbmsem/likelihood.hpp"
#include "rbmsem/model.hpp"

namespace testing_support {

using rbmsem::MatrixId;
using rbmsem::MatrixKind;
using rbmsem::MatrixPattern;
using rbmsem::ModelSpec;
using rbmsem::Vector;
using rbmsem::Matrix;

inline ModelSpec::Patterns empty_patterns(int p, int q) {
  ModelSpec::Patterns pats;
  pats[static_cast<int>(MatrixId::Nu)] = MatrixPattern(p, 1);
  pats[static_cast<int>(MatrixId::Lambda)] = MatrixPattern(p, q);
  pats[static_cast<int>(MatrixId::Theta)] = MatrixPattern(p, p, MatrixKind::Symmetric);
  pats[static_cast<int>(MatrixId::Alpha)] = MatrixPattern(q, 1);
  pats[static_cast<int>(MatrixId::B)] = MatrixPattern(q, q);
  pats[static_cast<int>(MatrixId::Psi)] = MatrixPattern(q, q, MatrixKind::Symmetric);
  return pats;
}

/// Saturated model: nu and every cell of Theta free, no latent variables.
inline ModelSpec saturated(int p) {
  auto pats = empty_patterns(p, 0);
  int idx = 0;
  for (int i = 0; i < p; ++i) pats[static_cast<int>(MatrixId::Nu)].set_free(i, 0, idx++);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) pats[static_cast<int>(MatrixId::Theta)].set_free(i, j, idx++);
  return ModelSpec(p, 0, std::move(pats), true, {}, "saturated");
}

/// y ~ N(nu, 1) with only the mean free.
inline ModelSpec known_variance_mean() {
  auto pats = empty_patterns(1, 0);
  pats[static_cast<int>(MatrixId::Nu)].set_free(0, 0, 0);
  pats[static_cast<int>(MatrixId::Theta)].set_fixed(0, 0, 1.0);
  return ModelSpec(1, 0, std::move(pats), true, {"nu1"}, "known_variance");
}

/// Admissible random point near the truth: variances scaled by U(0.5, 1.5),
/// other parameters shifted by U(-0.3, 0.3) * max(1, |value|).
inline Vector random_point(const ModelSpec& spec, const Vector& truth, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector out = truth;
  for (std::size_t a = 0; a < spec.free_count(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    if (spec.parameters()[a].is_variance()) {
      out[i] = truth[i] * (0.5 + u(rng));
    } else {
      out[i] = truth[i] + (u(rng) - 0.5) * 0.6 * std::max(1.0, std::abs(truth[i]) * 0.3);
    }
  }
  return out;
}

inline double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::max(std::abs(a[i]), std::abs(b[i]))));
  return worst;
}

inline rbmsem::Dataset normal_sample(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  rbmsem::Dataset d(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) d(i, j) = z(rng);
  return d;
}

}  // namespace testing_support
