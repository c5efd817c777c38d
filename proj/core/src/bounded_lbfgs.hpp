#pragma once

// Limited-memory BFGS restricted to a box, used for GP hyperparameter search.
// Directions are built on the free variables (those not pinned at an active
// bound) and steps are projected back onto the box.

#include <mdots/types.hpp>

#include <functional>

namespace mdots::detail {

/// Returns f(x) and writes the gradient. A non-finite value marks x as
/// infeasible; the line search then shortens the step.
using ValueAndGradient = std::function<double(const Vector& x, Vector& grad)>;

struct BoundedLbfgsOptions {
  int max_iterations = 200;
  int memory = 6;
  double projected_gradient_tolerance = 1e-6;
  double relative_function_tolerance = 1e-10;
};

struct BoundedLbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

BoundedLbfgsResult minimize_bounded(const ValueAndGradient& objective, Vector x0,
                                    const Vector& lower, const Vector& upper,
                                    const BoundedLbfgsOptions& options = {});

}  // namespace mdots::detail
