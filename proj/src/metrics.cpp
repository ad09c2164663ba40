#include "rbmsem/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rbmsem::metrics {

namespace {

void require(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("metrics need at least one replication");
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

double mean_bias(const std::vector<double>& estimates, double truth) {
  require(estimates);
  double s = 0.0;
  for (double x : estimates) s += x - truth;
  return s / static_cast<double>(estimates.size());
}

double rel_mean_bias(const std::vector<double>& estimates, double truth) {
  require(estimates);
  if (truth == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sum(estimates) / (static_cast<double>(estimates.size()) * truth) - 1.0;
}

double prob_underestimate(const std::vector<double>& estimates, double truth) {
  require(estimates);
  std::size_t under = 0;
  for (double x : estimates) under += x < truth ? 1 : 0;
  return static_cast<double>(under) / static_cast<double>(estimates.size());
}

double rmse(const std::vector<double>& estimates, double truth) {
  require(estimates);
  double s = 0.0;
  for (double x : estimates) s += (x - truth) * (x - truth);
  return std::sqrt(s / static_cast<double>(estimates.size()));
}

Coverage coverage(const std::vector<double>& estimates, const std::vector<double>& ses, double truth, double z) {
  require(estimates);
  if (ses.size() != estimates.size()) throw std::invalid_argument("estimates and SEs differ in length");
  Coverage out;
  std::size_t hit = 0, used = 0;
  for (std::size_t r = 0; r < estimates.size(); ++r) {
    if (!(ses[r] > 0.0) || !std::isfinite(ses[r])) {
      ++out.excluded;
      continue;
    }
    ++used;
    if (estimates[r] - z * ses[r] <= truth && truth <= estimates[r] + z * ses[r]) ++hit;
  }
  out.rate = used ? static_cast<double>(hit) / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double mc_se(const std::vector<double>& estimates) {
  require(estimates);
  const auto r = static_cast<double>(estimates.size());
  if (estimates.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = sum(estimates) / r;
  double ss = 0.0;
  for (double x : estimates) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
}

}  // namespace rbmsem::metrics
