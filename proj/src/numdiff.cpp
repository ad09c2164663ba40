#include "rbmsem/numdiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rbmsem/errors.hpp"

namespace rbmsem::numdiff {

namespace {

const double kEps = std::numeric_limits<double>::epsilon();

// Rounds the step so that x + h - x == h exactly.
double representable(double x, double h) {
  volatile double shifted = x + h;
  return shifted - x;
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalDifferentiationError(std::string("non-finite entries in numeric ") + what);
}

}  // namespace

double gradient_step(double x) { return std::cbrt(kEps) * std::max(1.0, std::abs(x)); }
double hessian_step(double x) { return std::pow(kEps, 0.25) * std::max(1.0, std::abs(x)); }

Vector gradient(const ScalarFunction& f, const Vector& x) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const double h = representable(x[a], gradient_step(x[a]));
    probe[a] = x[a] + h;
    const double up = f(probe);
    probe[a] = x[a] - h;
    const double down = f(probe);
    probe[a] = x[a];
    g[a] = (up - down) / (2.0 * h);
  }
  check_finite(g, "gradient");
  return g;
}

Matrix jacobian(const VectorFunction& f, const Vector& x, double rel_step) {
  Matrix jac;
  Vector probe = x;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const double step = rel_step > 0.0 ? rel_step * std::max(1.0, std::abs(x[a])) : gradient_step(x[a]);
    const double h = representable(x[a], step);
    Vector up, down;
    double span = 2.0 * h;
    probe[a] = x[a] + h;
    try {
      up = f(probe);
    } catch (const std::domain_error&) {
      up.resize(0);
    }
    probe[a] = x[a] - h;
    try {
      down = f(probe);
    } catch (const std::domain_error&) {
      down.resize(0);
    }
    if (up.size() == 0 || down.size() == 0) {
      if (up.size() == 0 && down.size() == 0) throw NumericalDifferentiationError("both difference probes infeasible");
      probe[a] = x[a];
      const Vector centre = f(probe);
      if (up.size() == 0) {
        up = centre;
      } else {
        down = centre;
      }
      span = h;
    }
    probe[a] = x[a];
    if (jac.size() == 0) jac.resize(up.size(), x.size());
    jac.col(a) = (up - down) / span;
  }
  check_finite(jac, "jacobian");
  return jac;
}

Matrix hessian(const ScalarFunction& f, const Vector& x) {
  const Eigen::Index m = x.size();
  Matrix h(m, m);
  Vector steps(m);
  for (Eigen::Index a = 0; a < m; ++a) steps[a] = representable(x[a], hessian_step(x[a]));
  const double f0 = f(x);
  Vector probe = x;
  for (Eigen::Index a = 0; a < m; ++a) {
    probe[a] = x[a] + steps[a];
    const double up = f(probe);
    probe[a] = x[a] - steps[a];
    const double down = f(probe);
    probe[a] = x[a];
    h(a, a) = (up - 2.0 * f0 + down) / (steps[a] * steps[a]);
    for (Eigen::Index b = 0; b < m; ++b) {
      if (b == a) continue;
      // Evaluate the mixed stencil separately for (a,b) and (b,a) so that
      // asymmetry in the result reflects rounding only.
      auto at = [&](double sa, double sb) {
        probe[a] = x[a] + sa * steps[a];
        probe[b] = x[b] + sb * steps[b];
        const double v = f(probe);
        probe[a] = x[a];
        probe[b] = x[b];
        return v;
      };
      h(a, b) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * steps[a] * steps[b]);
    }
  }
  check_finite(h, "hessian");
  return h;
}

}  // namespace rbmsem::numdiff
