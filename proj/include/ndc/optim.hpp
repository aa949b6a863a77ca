#pragma once

#include <Eigen/Dense>
#include <functional>

namespace ndc::optim {

// Returns f(x); fills *gradient when it is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* gradient)>;

struct Options {
  int max_iterations = 5000;
  double gradient_tolerance = 1e-10;  // on the infinity norm
  double relative_f_tolerance = 1e-15;
  int stall_limit = 8;  // consecutive iterations below relative_f_tolerance
};

struct Result {
  Eigen::VectorXd x;
  double f = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// BFGS with an inverse-Hessian update and Armijo backtracking.
// Updates violating the curvature condition are skipped.
Result minimize_bfgs(const Objective& objective, Eigen::VectorXd x0, const Options& options = {});

// Central differences; used by tests and by objectives without analytic gradients.
Eigen::VectorXd numeric_gradient(const Objective& objective, const Eigen::VectorXd& x,
                                 double step = 1e-6);

// Bisection for a sign change of f on [lo, hi]. Stops when |f| <= f_tolerance
// or the bracket width falls below x_tolerance.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double f_tolerance, double x_tolerance = 0.0, int max_iterations = 400);

}  // namespace ndc::optim
