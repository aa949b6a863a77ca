#pragma once

#include <vector>

namespace ndc {

// Rectangular deaths/exposure panel over contiguous ages and calendar years.
// Cells are stored age-major: index = (age - first_age) * years + (year - first_year).
class NationalPanel {
 public:
  NationalPanel(int first_age, int ages, int first_year, int years, std::vector<double> deaths,
                std::vector<double> exposure);

  int first_age() const noexcept { return first_age_; }
  int last_age() const noexcept { return first_age_ + ages_ - 1; }
  int age_count() const noexcept { return ages_; }
  int first_year() const noexcept { return first_year_; }
  int last_year() const noexcept { return first_year_ + years_ - 1; }
  int year_count() const noexcept { return years_; }

  double deaths(int age, int year) const { return deaths_[index(age, year)]; }
  double exposure(int age, int year) const { return exposure_[index(age, year)]; }

  const std::vector<double>& deaths_data() const noexcept { return deaths_; }
  const std::vector<double>& exposure_data() const noexcept { return exposure_; }

 private:
  std::size_t index(int age, int year) const;

  int first_age_, ages_, first_year_, years_;
  std::vector<double> deaths_, exposure_;
};

struct LCParams {
  int first_age = 0;
  int first_year = 0;
  int ref_year = 0;
  std::vector<double> alpha;  // per age
  std::vector<double> beta;   // per age, sums to one
  std::vector<double> kappa;  // per year, zero at ref_year

  int last_age() const noexcept { return first_age + static_cast<int>(alpha.size()) - 1; }
  int last_year() const noexcept { return first_year + static_cast<int>(kappa.size()) - 1; }

  double alpha_at(int age) const;
  double beta_at(int age) const;
  double kappa_at(int year) const;

  // Age sensitivity held flat outside the fitted ages; used when life tables
  // run past the national age range.
  double beta_extended(int age) const;

  bool operator==(const LCParams&) const = default;
};

struct LCFitOptions {
  int max_iterations = 10000;
  double relative_tolerance = 1e-10;
};

struct LCFitReport {
  double log_likelihood = 0.0;  // full Poisson log-likelihood
  double deviance = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> log_likelihood_trace;  // one entry per sweep, starting value first
};

struct LCFit {
  LCParams params;
  LCFitReport report;
};

// Poisson maximum likelihood by alternating one-dimensional Newton sweeps over
// alpha, kappa and beta; identification is applied once at convergence.
LCFit fit_lc_poisson(const NationalPanel& panel, int ref_year, const LCFitOptions& options = {});

// Rescales beta to unit sum (kappa inversely) and shifts kappa to zero at the
// reference year, absorbing the shift into alpha. The surface is unchanged.
LCParams normalize_lc(int first_age, int first_year, std::vector<double> alpha,
                      std::vector<double> beta, std::vector<double> kappa, int ref_year);

double fitted_log_m(const LCParams& params, int age, int year);

double poisson_log_likelihood(const NationalPanel& panel, const LCParams& params);

}  // namespace ndc
