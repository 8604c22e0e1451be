#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace poe {

struct NewtonOptions {
  /// Stop when the predicted increase g' H^-1 g falls below grad_tol * max(1, |f|).
  double grad_tol = 1e-8;
  std::size_t max_iters = 50;
  double backtrack = 0.5;
  double armijo = 1e-4;
  double kappa0 = 1.0;
  std::size_t max_backtracks = 60;
};

/// Smooth objective to maximize. `eval` fills value, gradient and Hessian; `value` may
/// return -inf outside the domain; `max_step` bounds the step length along p so the
/// iterate stays inside the domain (+inf when unbounded).
struct NewtonObjective {
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)> eval;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> max_step;
};

struct NewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;           ///< max-norm of the gradient at x
  std::size_t iterations = 0;       ///< accepted steps
  std::size_t gradient_fallbacks = 0;
  bool line_search_failed = false;
  bool converged = false;
};

/// Damped Newton ascent with Jacobi scaling and Armijo backtracking. A Hessian that is not
/// negative definite after scaling is replaced, for that step, by its spectrum's absolute
/// values (floored at 1e-10 of the largest).
NewtonResult newton_maximize(const NewtonObjective& obj, Eigen::VectorXd x0,
                             const NewtonOptions& opts = {});

}  // namespace poe
