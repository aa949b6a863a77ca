#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ndc/cells.hpp"

namespace ndc {

// Integer age range [x0, x1] mapped onto standardized age in [0, 1].
struct AgeGrid {
  int x0 = 50;
  int x1 = 120;

  void validate() const;
  double standardize(double age) const;

  bool operator==(const AgeGrid&) const = default;
};

struct BasisValues {
  double h00 = 0.0;
  double h01 = 0.0;
  double h10 = 0.0;
  double h11 = 0.0;
};

// Cubic Hermite basis on [0, 1]. Inputs within 1e-12 of an endpoint snap to it.
BasisValues hermite_basis(double xt);

enum class Variant { HSM1, HSM2, HSM3, HSM4, GompertzFree, GompertzConstrained };

std::string_view to_string(Variant variant);
Variant variant_from_string(std::string_view name);

// Which coefficients carry one value per group.
struct Layout {
  bool omega_by_group;
  bool mu0_by_group;
  bool mu1_by_group;
};
Layout layout_of(Variant variant);

// Free parameters of a J-group specification (HSM-I: 3J+1 ... HSM-IV: J+3).
int free_parameter_count(Variant variant, int groups);

// Log-mortality schedules alpha(x, j) = theta_j h00 + omega_j h01 + mu0_j h10 + mu1_j h11.
// Shared coefficients are stored once; accessors take a zero-based group index.
class HermiteSpec {
 public:
  HermiteSpec(Variant variant, std::vector<double> theta, std::vector<double> omega,
              std::vector<double> mu0, std::vector<double> mu1);

  // Gompertz variants: slopes are implied by the two endpoint levels.
  static HermiteSpec gompertz(Variant variant, std::vector<double> theta,
                              std::vector<double> omega);

  Variant variant() const noexcept { return variant_; }
  int groups() const noexcept { return static_cast<int>(theta_.size()); }

  double theta(int group) const;
  double omega(int group) const;
  double mu0(int group) const;
  double mu1(int group) const;

  const std::vector<double>& theta_values() const noexcept { return theta_; }
  const std::vector<double>& omega_values() const noexcept { return omega_; }
  const std::vector<double>& mu0_values() const noexcept { return mu0_; }
  const std::vector<double>& mu1_values() const noexcept { return mu1_; }

  // Alpha at standardized age.
  double alpha(int group, double xt) const;

  bool operator==(const HermiteSpec&) const = default;

 private:
  void check_group(int group) const;

  Variant variant_;
  std::vector<double> theta_;
  std::vector<double> omega_;
  std::vector<double> mu0_;
  std::vector<double> mu1_;
};

double alpha_eval(const HermiteSpec& spec, int group, double age, const AgeGrid& grid);

struct GompertzFit {
  HermiteSpec spec;
  std::vector<double> intercept;  // log mortality extrapolated to age 0
  std::vector<double> slope;      // per year of age
  double q = 0.0;                 // Poisson kernel at the optimum
  int iterations = 0;
};

// Poisson MLE of a log-linear schedule per group. The constrained fit keeps both
// the level at x0 and the slope weakly decreasing in the group index.
GompertzFit gompertz_fit(std::span<const PooledCell> cells, int groups, const AgeGrid& grid,
                         bool constrained);

struct CrossoverReport {
  bool ok = true;
  std::vector<std::pair<int, int>> violations;  // (i, j) with j > i
};

// Sufficient condition mu0_j - mu0_i <= 3 (theta_i - theta_j) for all j > i.
CrossoverReport check_non_crossover(const HermiteSpec& spec);

}  // namespace ndc
