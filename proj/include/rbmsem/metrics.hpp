#pragma once

#include <vector>

namespace rbmsem::metrics {

double mean_bias(const std::vector<double>& estimates, double truth);
/// NaN when truth == 0 (relative bias undefined).
double rel_mean_bias(const std::vector<double>& estimates, double truth);
/// Fraction strictly below the truth.
double prob_underestimate(const std::vector<double>& estimates, double truth);
double rmse(const std::vector<double>& estimates, double truth);

struct Coverage {
  double rate = 0.0;  // over replications with a positive SE
  int excluded = 0;   // replications with a nonpositive or missing SE
};
Coverage coverage(const std::vector<double>& estimates, const std::vector<double>& ses, double truth, double z = 1.96);

/// sd(estimates) / sqrt(R), sample sd with divisor R - 1.
double mc_se(const std::vector<double>& estimates);

}  // namespace rbmsem::metrics
