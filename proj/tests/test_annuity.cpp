#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ndc/annuity.hpp"
#include "ndc/errors.hpp"

using namespace ndc;

namespace {

SurvivalCurve from_const(double m, int start = 60) {
  const std::vector<double> rates(static_cast<std::size_t>(120 - start), m);
  return survival_from_rates(rates, start, {});
}

SurvivalCurve random_curve(std::mt19937_64& gen, std::vector<double>& rates) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  rates.resize(60);
  for (std::size_t s = 0; s < rates.size(); ++s) rates[s] = std::exp(-5.0 + 0.09 * static_cast<double>(s) + u(gen));
  return survival_from_rates(rates, 60, {});
}

}  // namespace

TEST_CASE("survival construction") {
  const SurvivalCurve none = from_const(0.0);
  CHECK(none.months() == 721);
  for (std::size_t m = 0; m < 720; ++m) CHECK(none[m] == 1.0);
  CHECK(none[720] == 0.0);

  const SurvivalCurve half = from_const(std::log(2.0));
  CHECK(half[12] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(half[6] == doctest::Approx(std::pow(2.0, -0.5)).epsilon(1e-14));

  std::vector<double> alt;
  for (int s = 0; s < 60; ++s) alt.push_back(s % 2 == 0 ? 0.1 : 0.2);
  const SurvivalCurve two = survival_from_rates(alt, 60, {});
  CHECK(two[24] == doctest::Approx(std::exp(-0.3)).epsilon(1e-14));

  const std::vector<double> short_rates(10, 0.01);
  CHECK_THROWS_AS(survival_from_rates(short_rates, 60, {}), ValidationError);
  CHECK_THROWS(SurvivalCurve(60, {1.0, 0.5, 0.7, 0.0}));
  CHECK_THROWS(SurvivalCurve(60, {0.9, 0.0}));
}

TEST_CASE("annuity values") {
  const AnnuityBasis basis{0.07};
  const double v = basis.v();
  const double geometric = (1.0 - std::pow(v, 720.0 / 12.0)) / (1.0 - std::pow(v, 1.0 / 12.0)) / 12.0;
  CHECK(annuity_monthly(from_const(0.0), basis) == doctest::Approx(geometric).epsilon(1e-13));

  std::vector<double> p(721, 0.0);
  p[0] = 1.0;
  const SurvivalCurve sudden(60, p);
  CHECK(annuity_monthly(sudden, basis) == doctest::Approx(1.0 / 12.0));
  CHECK(fair_cm(sudden, basis) == doctest::Approx(1.0));
  CHECK(12.0 * annuity_monthly_v(from_const(0.03), 0.0) == doctest::Approx(1.0));

  const SurvivalCurve c = from_const(0.03);
  const double sum = std::accumulate(c.values().begin(), c.values().end(), 0.0);
  CHECK(annuity_monthly(c, {0.0}) == doctest::Approx(sum / 12.0).epsilon(1e-14));
  CHECK_THROWS_AS(AnnuityBasis{-1.0}.validate(), ValidationError);
}

TEST_CASE("subsidy and official schedule") {
  CHECK(subsidy(157.0, 139) == doctest::Approx(0.1295).epsilon(1e-3));
  CHECK(subsidy(153.3, 117) == doctest::Approx(0.3103).epsilon(1e-3));
  CHECK(subsidy(139, 139) == 0.0);
  CHECK_THROWS_AS(subsidy(100, 0), ValidationError);
  CHECK(official_cm(60) == 139);
  CHECK(official_cm(63) == 117);
  CHECK(official_cm(70) == 56);
  CHECK(official_cm(40) == 233);
  CHECK_THROWS_AS(official_cm(39), ValidationError);
  CHECK_THROWS_AS(official_cm(71), ValidationError);
  for (int a = kOfficialFirstAge; a < kOfficialLastAge; ++a) CHECK(official_cm(a + 1) < official_cm(a));
  const std::string csv = official_schedule_csv();
  CHECK(csv.rfind("age,official_cm\n40,233\n", 0) == 0);
  CHECK(csv.find("\n70,56\n") != std::string::npos);
  CHECK(round_half_away(12.95, 1) == doctest::Approx(13.0));
  CHECK(round_half_away(-0.25, 1) == doctest::Approx(-0.3));
}

TEST_CASE("annuity gap") {
  const SurvivalCurve c = from_const(0.02);
  CHECK(annuity_gap(c, c, 0.05) == 0.0);
  CHECK(annuity_gap(from_const(0.01), from_const(0.05), 1e72) <= 1e-6);
  CHECK_THROWS_AS(annuity_gap(from_const(0.05), from_const(0.01), 0.07), ValidationError);

  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int pair = 0; pair < 200; ++pair) {
    std::vector<double> lo_rates;
    const SurvivalCurve lo = random_curve(gen, lo_rates);
    std::vector<double> hi_rates = lo_rates;
    for (auto& m : hi_rates) m *= u(gen);
    const SurvivalCurve hi = survival_from_rates(hi_rates, 60, {});
    double previous = INFINITY;
    for (int k = 1; k <= 20; ++k) {
      const double gap = annuity_gap(hi, lo, 0.0075 * k);
      CHECK(gap >= 0.0);
      CHECK(gap <= previous);
      previous = gap;
    }
  }
}

TEST_CASE("fair counting month is decreasing in r and bounded") {
  std::mt19937_64 gen(4);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> rates;
    const SurvivalCurve curve = random_curve(gen, rates);
    double previous = INFINITY;
    for (int k = 0; k <= 15; ++k) {
      const double f = fair_cm(curve, {0.01 * k});
      CHECK(f < previous);
      CHECK(f >= 1.0);
      CHECK(f <= 720.0);
      previous = f;
    }
  }
}
