#pragma once

#include <functional>

#include "rbmsem/model.hpp"

namespace rbmsem::numdiff {

using ScalarFunction = std::function<double(const Vector&)>;
using VectorFunction = std::function<Vector(const Vector&)>;

// cbrt(eps) for first derivatives, eps^(1/4) for second differences.
double gradient_step(double x);
double hessian_step(double x);

/// Central-difference gradient with steps gradient_step(x_a).
Vector gradient(const ScalarFunction& f, const Vector& x);

/// Central-difference Jacobian; column a holds d f / d x_a. rel_step > 0
/// overrides the default step with rel_step * max(1, |x_a|). Falls back to a
/// one-sided difference when one of the two probes throws a domain error.
Matrix jacobian(const VectorFunction& f, const Vector& x, double rel_step = 0.0);

/// Hessian from second differences of f with steps hessian_step(x_a). Not
/// symmetrized.
Matrix hessian(const ScalarFunction& f, const Vector& x);

}  // namespace rbmsem::numdiff
