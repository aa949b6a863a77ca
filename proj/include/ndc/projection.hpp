#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ndc {

struct RwdParams {
  double drift = 0.0;
  double sigma = 0.0;
};

// Exact maximum likelihood for a Gaussian random walk with drift.
RwdParams fit_rwd(std::span<const double> kappa);

struct KappaPaths {
  int base_year = 0;
  int horizon = 0;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;  // path-major, n_paths x horizon; step s is base_year + s + 1

  double at(int path, int step) const {
    return values[static_cast<std::size_t>(path) * static_cast<std::size_t>(horizon) +
                  static_cast<std::size_t>(step)];
  }
  int year(int step) const { return base_year + step + 1; }
};

// kappa_{t+1} = kappa_t + drift + sigma Z. Each path draws from its own
// substream so results do not depend on the number of paths requested.
KappaPaths simulate_kappa(const RwdParams& params, double kappa_base, int base_year, int horizon,
                          int n_paths, std::uint64_t seed);

// Per-step lower median across paths of evaluator(kappa, year).
using PathStatistic = std::function<double(double kappa, int year)>;
std::vector<double> median_projection(const PathStatistic& evaluator, const KappaPaths& paths);

// Lower median of a sample (element (n-1)/2 of the sorted values).
double lower_median(std::vector<double> values);

}  // namespace ndc
