#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "rbmsem/likelihood.hpp"
#include "rbmsem/model.hpp"

namespace rbmsem {

struct DistributionSpec {
  double skewness = 0.0;
  double excess_kurtosis = 0.0;

  bool is_normal() const { return skewness == 0.0 && excess_kurtosis == 0.0; }
  bool feasible() const { return excess_kurtosis >= skewness * skewness - 2.0; }

  static DistributionSpec normal() { return {0.0, 0.0}; }
  /// Skewness -2 and excess kurtosis 6, the non-normal setting of the study.
  static DistributionSpec nonnormal() { return {-2.0, 6.0}; }
};

/// "normal", "nonnormal" or "skew,kurtosis".
DistributionSpec parse_distribution(std::string_view text);
std::string distribution_name(const DistributionSpec& dist);

/// (a, b, c, d) with a + bZ + cZ^2 + dZ^3 matching mean 0, variance 1 and the
/// requested skewness / excess kurtosis. Damped Newton; throws
/// std::runtime_error when the moment system is not solved to 1e-10.
std::array<double, 4> fleishman_coeffs(const DistributionSpec& dist);

/// Correlation of the normal pair that yields correlation `target` after the
/// two Fleishman transforms. Bisection to 1e-10.
double intermediate_correlation(double target, const std::array<double, 4>& c1, const std::array<double, 4>& c2);

struct SimulatedData {
  Dataset y;     // n x p
  Matrix zeta;   // n x q structural drivers
  Matrix eps;    // n x p measurement errors
};

/// eta = (I - B)^-1 (alpha + zeta), y = nu + Lambda eta + eps with zeta and
/// eps drawn independently; non-normal draws use the Vale-Maurelli method.
/// Row r uses its own generator seeded from (seed, r), so results do not
/// depend on thread count.
SimulatedData simulate_with_drivers(const ModelSpec& spec, const Vector& theta, int n, const DistributionSpec& dist,
                                    std::uint64_t seed);
Dataset simulate(const ModelSpec& spec, const Vector& theta, int n, const DistributionSpec& dist, std::uint64_t seed);

}  // namespace rbmsem
