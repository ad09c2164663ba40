#pragma once

#include <functional>
#include <string>

#include "rbmsem/model.hpp"

namespace rbmsem {

struct OptimOptions {
  int max_iterations = 500;
  int memory = 10;
  double gradient_tolerance = 1e-6;   // max |scaled projected gradient|
  double step_tolerance = 1e-10;      // max relative step
  double relative_function_tolerance = 1e-10;
  Vector scale;                       // typical magnitudes; empty = max(1, |x0|)
};

struct OptimResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  std::string message;
};

/// Returns f(x) and writes the gradient into *grad when non-null. Infeasible
/// points return +infinity; the line search then backtracks.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

/// Limited-memory quasi-Newton minimization with projected box constraints.
/// Never throws on optimization failure; check `converged`.
OptimResult minimize_box(const Objective& f, const Vector& x0, const Vector& lower, const Vector& upper,
                         const OptimOptions& options = {});

}  // namespace rbmsem
