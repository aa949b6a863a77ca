#include "ndc/optim.hpp"

#include <cmath>
#include <limits>

#include "ndc/errors.hpp"

namespace ndc::optim {

Result minimize_bfgs(const Objective& objective, Eigen::VectorXd x0, const Options& options) {
  const Eigen::Index n = x0.size();
  Result result;
  result.x = std::move(x0);

  Eigen::VectorXd g(n);
  double f = objective(result.x, &g);
  if (!std::isfinite(f)) {
    throw ConvergenceError("objective is not finite at the starting point",
                           {result.x.data(), result.x.data() + n}, INFINITY, 0);
  }
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  // Scale the initial inverse Hessian so the first step is O(1) in x.
  if (const double gnorm = g.norm(); gnorm > 1.0) h_inv /= gnorm;

  Eigen::VectorXd x_new(n), g_new(n);
  int stalls = 0;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Eigen::VectorXd direction = -h_inv * g;
    double slope = g.dot(direction);
    if (slope >= 0.0) {
      h_inv.setIdentity();
      direction = -g;
      slope = -g.squaredNorm();
    }

    double step = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = result.x + step * direction;
      f_new = objective(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent possible at machine resolution: treat as stationary.
      result.converged = g.lpNorm<Eigen::Infinity>() <= std::sqrt(options.gradient_tolerance);
      break;
    }

    const Eigen::VectorXd s = x_new - result.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
               rho * (hy * s.transpose() + s * hy.transpose());
    }

    const double change = std::abs(f - f_new);
    stalls = change <= options.relative_f_tolerance * std::max(1.0, std::abs(f)) ? stalls + 1 : 0;
    result.x = x_new;
    g = g_new;
    f = f_new;
    if (stalls >= options.stall_limit) {
      result.converged = true;
      ++it;
      break;
    }
  }
  result.f = f;
  result.gradient_norm = g.lpNorm<Eigen::Infinity>();
  result.iterations = it;
  if (result.gradient_norm <= options.gradient_tolerance) result.converged = true;
  return result;
}

Eigen::VectorXd numeric_gradient(const Objective& objective, const Eigen::VectorXd& x,
                                 double step) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = objective(probe, nullptr);
    probe[i] = x[i] - h;
    const double down = objective(probe, nullptr);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double f_tolerance,
              double x_tolerance, int max_iterations) {
  double f_lo = f(lo);
  const double f_hi = f(hi);
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if ((f_lo > 0.0) == (f_hi > 0.0)) {
    throw ValidationError("bisect: no sign change on the initial bracket");
  }
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < max_iterations; ++i) {
    mid = 0.5 * (lo + hi);
    const double f_mid = f(mid);
    if (std::abs(f_mid) <= f_tolerance || (hi - lo) <= x_tolerance) return mid;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

}  // namespace ndc::optim
