#include <cmath>
#include <random>

#include "doctest.h"
#include "ndc/errors.hpp"
#include "ndc/hermite.hpp"

using namespace ndc;

TEST_CASE("basis endpoint and midpoint values") {
  const BasisValues b0 = hermite_basis(0.0);
  CHECK(b0.h00 == 1.0);
  CHECK(b0.h01 == 0.0);
  CHECK(b0.h10 == 0.0);
  CHECK(b0.h11 == 0.0);
  const BasisValues b1 = hermite_basis(1.0);
  CHECK(b1.h00 == 0.0);
  CHECK(b1.h01 == 1.0);
  CHECK(b1.h10 == 0.0);
  CHECK(b1.h11 == 0.0);
  // (1 + 1)(0.25), 0.25 (3 - 1), 0.5 * 0.25, 0.25 * (-0.5)
  const BasisValues h = hermite_basis(0.5);
  CHECK(h.h00 == doctest::Approx(0.5));
  CHECK(h.h01 == doctest::Approx(0.5));
  CHECK(h.h10 == doctest::Approx(0.125));
  CHECK(h.h11 == doctest::Approx(-0.125));
}

TEST_CASE("basis domain") {
  CHECK_THROWS_AS(hermite_basis(-0.01), DomainError);
  CHECK_THROWS_AS(hermite_basis(1.01), DomainError);
  CHECK(hermite_basis(-1e-13).h00 == 1.0);
  CHECK(hermite_basis(1.0 + 1e-13).h01 == 1.0);
}

TEST_CASE("partition of unity on a dense grid") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    const double x = i < 1001 ? i / 1000.0 : u(gen);
    const BasisValues b = hermite_basis(x);
    CHECK(std::abs(b.h00 + b.h01 - 1.0) <= 1e-12);
    // independent closed forms
    CHECK(b.h10 == doctest::Approx(x * (1 - x) * (1 - x)).epsilon(1e-12));
    CHECK(b.h11 == doctest::Approx(x * x * (x - 1)).epsilon(1e-12));
  }
}

TEST_CASE("alpha_eval examples") {
  const AgeGrid grid{};
  const HermiteSpec flat(Variant::HSM4, {-5.0}, {0.0}, {0.0}, {0.0});
  CHECK(alpha_eval(flat, 0, 120, grid) == 0.0);
  CHECK(alpha_eval(flat, 0, 50, grid) == -5.0);
  const HermiteSpec gom(Variant::HSM4, {-6.0}, {-1.0}, {5.0}, {5.0});
  CHECK(alpha_eval(gom, 0, 85, grid) == doctest::Approx(-3.5).epsilon(1e-14));
  CHECK_THROWS(alpha_eval(gom, 1, 60, grid));
  CHECK_THROWS_AS(alpha_eval(gom, 0, 121, grid), DomainError);
}

TEST_CASE("grid validation and standardization") {
  CHECK_THROWS(AgeGrid{60, 60}.validate());
  const AgeGrid g{};
  CHECK(g.standardize(50) == 0.0);
  CHECK(g.standardize(120) == 1.0);
  CHECK(g.standardize(85) == 0.5);
}

TEST_CASE("variant layouts and parameter counts") {
  for (int j = 1; j <= 7; ++j) {
    CHECK(free_parameter_count(Variant::HSM1, j) == 3 * j + 1);
    CHECK(free_parameter_count(Variant::HSM2, j) == 2 * j + 2);
    CHECK(free_parameter_count(Variant::HSM3, j) == 2 * j + 2);
    CHECK(free_parameter_count(Variant::HSM4, j) == j + 3);
    CHECK(free_parameter_count(Variant::GompertzFree, j) == 2 * j);
    CHECK(free_parameter_count(Variant::HSM4, j) <= free_parameter_count(Variant::HSM1, j));
  }
  for (const Variant v : {Variant::HSM1, Variant::HSM2, Variant::HSM3, Variant::HSM4, Variant::GompertzFree,
                          Variant::GompertzConstrained}) {
    CHECK(variant_from_string(to_string(v)) == v);
  }
  CHECK(layout_of(Variant::HSM3).mu0_by_group);
  CHECK_FALSE(layout_of(Variant::HSM3).omega_by_group);
  CHECK_FALSE(layout_of(Variant::HSM1).mu1_by_group);
  CHECK_THROWS(variant_from_string("HSM-V"));
}

TEST_CASE("spec layout validation") {
  CHECK_THROWS_AS(HermiteSpec(Variant::HSM3, {-5, -6}, {-1, -1}, {1, 2}, {0.5}), ValidationError);
  CHECK_THROWS_AS(HermiteSpec(Variant::HSM1, {-5, -6}, {-1, -1}, {1, 2}, {0.5, 0.5}), ValidationError);
  CHECK_NOTHROW(HermiteSpec(Variant::HSM1, {-5, -6}, {-1, -1.2}, {1, 2}, {0.5}));
  CHECK_THROWS_AS(HermiteSpec(Variant::GompertzFree, {-5}, {-1}, {3}, {3}), ValidationError);
  const HermiteSpec g = HermiteSpec::gompertz(Variant::GompertzFree, {-5}, {-1});
  CHECK(g.mu0(0) == 4.0);
  CHECK(g.mu1(0) == 4.0);
}

TEST_CASE("Gompertz reduction is affine in standardized age") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> th(-9.0, -3.0), w(-2.0, 1.0), u(0.0, 1.0);
  const AgeGrid grid{};
  for (int c = 0; c < 300; ++c) {
    const double t = th(gen), o = w(gen);
    const HermiteSpec s = HermiteSpec::gompertz(Variant::GompertzFree, {t}, {o});
    for (int k = 0; k < 50; ++k) {
      const double x = u(gen);
      CHECK(std::abs(s.alpha(0, x) - (t + (o - t) * x)) <= 1e-12);
    }
  }
}

TEST_CASE("non-crossover examples") {
  const HermiteSpec ok(Variant::HSM3, {-5, -5.5}, {-1}, {1.0, 2.0}, {0.5});
  CHECK(check_non_crossover(ok).ok);
  const HermiteSpec bad(Variant::HSM3, {-5, -5.5}, {-1}, {1.0, 3.0}, {0.5});
  const CrossoverReport r = check_non_crossover(bad);
  CHECK_FALSE(r.ok);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0] == std::pair<int, int>{0, 1});
  CHECK(check_non_crossover(HermiteSpec(Variant::HSM3, {-5}, {-1}, {9.0}, {0.5})).ok);
}

TEST_CASE("non-crossover sufficiency on random specs") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int tested = 0;
  while (tested < 300) {
    const int groups = 2 + static_cast<int>(u(gen) * 4);
    std::vector<double> theta{-4.0 - 2.0 * u(gen)}, mu0{4.0 * u(gen)};
    for (int j = 1; j < groups; ++j) {
      const double step = 0.01 + 0.5 * u(gen);
      theta.push_back(theta.back() - step);
      // increment of mu0 anywhere below 3x the theta step, possibly negative
      mu0.push_back(mu0.back() + 3.0 * step * (2.0 * u(gen) - 1.0));
    }
    const bool hsm1 = u(gen) < 0.5;
    std::vector<double> omega{-1.0 + u(gen)};
    if (hsm1) omega.assign(static_cast<std::size_t>(groups), omega[0]);
    const HermiteSpec s(hsm1 ? Variant::HSM1 : Variant::HSM3, theta, omega, mu0, {4.0 * u(gen) - 2.0});
    REQUIRE(check_non_crossover(s).ok);
    for (int k = 1; k < 1000; ++k) {
      const double x = k / 1000.0;
      for (int j = 1; j < groups; ++j) CHECK(s.alpha(j, x) < s.alpha(j - 1, x));
    }
    ++tested;
  }
}

TEST_CASE("violated inequality can produce crossing curves") {
  const HermiteSpec bad(Variant::HSM3, {-5, -5.1}, {-1}, {1.0, 4.0}, {0.5});
  bool crossed = false;
  for (int k = 1; k < 1000; ++k) crossed |= bad.alpha(1, k / 1000.0) > bad.alpha(0, k / 1000.0);
  CHECK(crossed);
}

namespace {

std::vector<PooledCell> gompertz_cells(const std::vector<double>& a, const std::vector<double>& b, double exposure,
                                       int x_lo, int x_hi) {
  std::vector<PooledCell> cells;
  for (std::size_t j = 0; j < a.size(); ++j) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double m = std::exp(a[j] + b[j] * x);
      cells.push_back({x, static_cast<int>(j), exposure * m, exposure});
    }
  }
  return cells;
}

}  // namespace

TEST_CASE("Gompertz fit recovers known laws") {
  std::vector<double> a, b(5, 0.09);
  for (int j = 1; j <= 5; ++j) a.push_back(-10.0 + 0.2 * j);
  std::mt19937_64 gen(3);
  auto cells = gompertz_cells(a, b, 1e8, 50, 100);
  for (auto& c : cells) c.deaths = static_cast<double>(std::poisson_distribution<long long>(c.deaths)(gen));
  const GompertzFit fit = gompertz_fit(cells, 5, AgeGrid{}, false);
  for (int j = 0; j < 5; ++j) {
    CHECK(fit.intercept[static_cast<std::size_t>(j)] == doctest::Approx(a[static_cast<std::size_t>(j)]).epsilon(1e-2));
    CHECK(std::abs(fit.slope[static_cast<std::size_t>(j)] - 0.09) < 1e-2);
  }
  CHECK(fit.spec.variant() == Variant::GompertzFree);
}

TEST_CASE("two exact points determine the line") {
  const std::vector<PooledCell> cells{{60, 0, 1e6 * std::exp(-4.0), 1e6}, {70, 0, 1e6 * std::exp(-3.0), 1e6}};
  const GompertzFit fit = gompertz_fit(cells, 1, AgeGrid{}, false);
  CHECK(fit.slope[0] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(fit.intercept[0] + fit.slope[0] * 60 == doctest::Approx(-4.0).epsilon(1e-9));
}

TEST_CASE("constrained Gompertz orders the slopes") {
  // true slopes cross: the higher-level group has the flatter slope
  const auto cells = gompertz_cells({-9.0, -9.6}, {0.08, 0.09}, 1e7, 50, 100);
  const GompertzFit free = gompertz_fit(cells, 2, AgeGrid{}, false);
  CHECK(free.slope[1] > free.slope[0]);
  const GompertzFit con = gompertz_fit(cells, 2, AgeGrid{}, true);
  CHECK(con.slope[1] <= con.slope[0] + 1e-12);
  CHECK(con.q <= free.q + 1e-9);
}

TEST_CASE("Gompertz fit diagnostics") {
  std::vector<PooledCell> zero{{60, 0, 0.0, 100.0}, {61, 0, 0.0, 100.0}};
  CHECK_THROWS_AS(gompertz_fit(zero, 1, AgeGrid{}, false), ValidationError);
  std::vector<PooledCell> single{{60, 0, 3.0, 100.0}};
  CHECK_THROWS_AS(gompertz_fit(single, 1, AgeGrid{}, false), ValidationError);
}
