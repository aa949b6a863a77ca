#include <cmath>

#include "doctest.h"
#include "ndc/errors.hpp"
#include "ndc/optim.hpp"

using ndc::optim::minimize_bfgs;

TEST_CASE("bfgs minimizes the Rosenbrock valley") {
  const ndc::optim::Objective rosen = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    if (g) {
      g->resize(2);
      (*g)(0) = -2.0 * a - 400.0 * x(0) * b;
      (*g)(1) = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
  };
  const auto r = minimize_bfgs(rosen, Eigen::Vector2d(-1.2, 1.0));
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("bfgs on a convex quadratic reaches the exact solution") {
  Eigen::Matrix3d a;
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Eigen::Vector3d b(1, -2, 0.5);
  const ndc::optim::Objective quad = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = a * x - b;
    return 0.5 * x.dot(a * x) - b.dot(x);
  };
  const auto r = minimize_bfgs(quad, Eigen::Vector3d::Zero());
  const Eigen::Vector3d exact = a.ldlt().solve(b);
  CHECK((r.x - exact).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("numeric gradient matches an analytic gradient") {
  const ndc::optim::Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd*) {
    return std::sin(x(0)) * std::exp(x(1));
  };
  const Eigen::Vector2d x(0.3, -0.7);
  const Eigen::VectorXd g = ndc::optim::numeric_gradient(f, x);
  CHECK(g(0) == doctest::Approx(std::cos(0.3) * std::exp(-0.7)).epsilon(1e-8));
  CHECK(g(1) == doctest::Approx(std::sin(0.3) * std::exp(-0.7)).epsilon(1e-8));
}

TEST_CASE("bisection") {
  const double root = ndc::optim::bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0, 1e-14);
  CHECK(root == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
  const double falling = ndc::optim::bisect([](double x) { return 1.0 - x; }, 0.0, 3.0, 0.0, 1e-14);
  CHECK(falling == doctest::Approx(1.0).epsilon(1e-13));
  CHECK_THROWS_AS(ndc::optim::bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0, 1e-12),
                  ndc::ValidationError);
}
