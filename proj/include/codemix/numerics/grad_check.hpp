#pragma once

#include <functional>

#include "codemix/numerics/tape.hpp"

namespace codemix {

// Builds a scalar on the given tape from the input variable.
using ScalarFn = std::function<Var(Tape&, Var)>;

// |a - b| / max(1, |a|, |b|)
double relative_error(double a, double b);

// Compares the tape gradient of f at x with central differences
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) on every coordinate and
// returns the largest relative error. eps must lie in [1e-7, 1e-3].
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

// Central-difference gradient of a plain scalar function.
Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps);

}  // namespace codemix
