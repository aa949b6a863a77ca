#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "ndc/errors.hpp"
#include "ndc/projection.hpp"
#include "ndc/rng.hpp"

using namespace ndc;

TEST_CASE("Philox4x32-10 known answers") {
  using rng::Counter;
  using rng::Key;
  CHECK(rng::philox4x32({0, 0, 0, 0}, {0, 0}) == Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(rng::philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(rng::philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("stage keys and normal draws") {
  CHECK(rng::stage_key(1, "a") == rng::stage_key(1, "a"));
  CHECK(rng::stage_key(1, "a") != rng::stage_key(2, "a"));
  CHECK(rng::stage_key(1, "a") != rng::stage_key(1, "b"));
  const auto key = rng::stage_key(7, "test");
  CHECK(rng::normal_at(key, 3, 4) == rng::normal_at(key, 3, 4));
  CHECK(rng::normal_at(key, 3, 4) != rng::normal_at(key, 4, 3));
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng::normal_at(key, 0, static_cast<std::uint64_t>(i));
    CHECK(std::isfinite(z));
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) <= 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) <= 0.02);
  rng::PhiloxEngine e1(key, 5), e2(key, 5);
  for (int i = 0; i < 20; ++i) CHECK(e1() == e2());
}

TEST_CASE("random walk fit") {
  std::vector<double> a{0, -1, -2, -3};
  RwdParams p = fit_rwd(a);
  CHECK(p.drift == doctest::Approx(-1.0));
  CHECK(p.sigma == doctest::Approx(0.0));
  std::vector<double> b{0, 2};
  p = fit_rwd(b);
  CHECK(p.drift == 2.0);
  CHECK(p.sigma == 0.0);
  std::vector<double> c{0, 1, -1};
  p = fit_rwd(c);
  CHECK(p.drift == doctest::Approx(-0.5));
  CHECK(p.sigma == doctest::Approx(1.5));
  std::vector<double> d{1.0};
  CHECK_THROWS_AS(fit_rwd(d), ValidationError);
}

TEST_CASE("simulation") {
  const KappaPaths z = simulate_kappa({-1.0, 0.0}, 0.0, 2020, 3, 4, 1);
  for (int p = 0; p < 4; ++p) {
    for (int s = 0; s < 3; ++s) CHECK(z.at(p, s) == -(s + 1.0));
  }
  CHECK(z.year(0) == 2021);

  const KappaPaths a = simulate_kappa({-0.3, 1.2}, 2.0, 2020, 20, 50, 99);
  const KappaPaths b = simulate_kappa({-0.3, 1.2}, 2.0, 2020, 20, 50, 99);
  CHECK(a.values == b.values);
  const KappaPaths one = simulate_kappa({-0.3, 1.2}, 2.0, 2020, 20, 1, 99);
  for (int s = 0; s < 20; ++s) CHECK(one.at(0, s) == a.at(0, s));
  const KappaPaths other = simulate_kappa({-0.3, 1.2}, 2.0, 2020, 20, 50, 100);
  CHECK(other.values != a.values);

  const int n = 100000;
  const KappaPaths big = simulate_kappa({0.0, 1.0}, 0.0, 2020, 1, n, 5);
  double mean = 0.0;
  for (int p = 0; p < n; ++p) mean += big.at(p, 0);
  mean /= n;
  CHECK(std::abs(mean) <= 3.0 / std::sqrt(static_cast<double>(n)));

  CHECK_THROWS_AS(simulate_kappa({0, 1}, 0, 2020, 0, 1, 1), ValidationError);
  CHECK_THROWS_AS(simulate_kappa({0, 1}, 0, 2020, 1, 0, 1), ValidationError);
}

TEST_CASE("medians") {
  CHECK(lower_median({3, 1, 2}) == 2);
  CHECK(lower_median({4, 1, 3, 2}) == 2);
  KappaPaths three{2020, 1, 3, 0, {1, 2, 3}};
  const PathStatistic identity = [](double k, int) { return k; };
  CHECK(median_projection(identity, three) == std::vector<double>{2});

  KappaPaths same{2020, 3, 2, 0, {1, 2, 3, 1, 2, 3}};
  CHECK(median_projection(identity, same) == std::vector<double>{1, 2, 3});

  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 50; ++c) {
    KappaPaths paths{2020, 5, 1 + c, 0, {}};
    for (int i = 0; i < paths.n_paths * paths.horizon; ++i) paths.values.push_back(nd(gen));
    const PathStatistic up = [](double k, int year) { return std::exp(k) + year; };
    const PathStatistic down = [](double k, int) { return -k * k * k; };
    const auto mu = median_projection(up, paths);
    const auto md = median_projection(down, paths);
    const auto mid = median_projection(identity, paths);
    for (int s = 0; s < paths.horizon; ++s) {
      CHECK(mu[static_cast<std::size_t>(s)] == std::exp(mid[static_cast<std::size_t>(s)]) + paths.year(s));
      // decreasing maps send the lower median to the upper one; equal for odd counts
      if (paths.n_paths % 2 == 1) {
        const double m = mid[static_cast<std::size_t>(s)];
        CHECK(md[static_cast<std::size_t>(s)] == -m * m * m);
      }
    }
  }
}
