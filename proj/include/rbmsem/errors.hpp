#pragma once

#include <stdexcept>
#include <string>

namespace rbmsem {

// Raised when an implied covariance fails its Cholesky factorization.
// Optimizers treat it as an infeasible point rather than a crash.
class NotPositiveDefinite : public std::domain_error {
 public:
  explicit NotPositiveDefinite(const std::string& what) : std::domain_error(what) {}
};

class SingularMatrix : public std::domain_error {
 public:
  explicit SingularMatrix(const std::string& what) : std::domain_error(what) {}
};

class NumericalDifferentiationError : public std::runtime_error {
 public:
  explicit NumericalDifferentiationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rbmsem
