#pragma once

#include <span>
#include <string>
#include <vector>

namespace ndc {

struct AnnuityBasis {
  double r = 0.07;      // annual effective discount rate
  int limit_age = 120;  // survival is zero from here on

  void validate() const;
  double v() const { return 1.0 / (1.0 + r); }
};

// Survival probabilities at whole months from start_age to the limit age;
// the last entry (at the limit age) is zero.
class SurvivalCurve {
 public:
  SurvivalCurve(int start_age, std::vector<double> monthly);

  int start_age() const noexcept { return start_age_; }
  std::size_t months() const noexcept { return p_.size(); }
  double operator[](std::size_t month) const { return p_[month]; }
  const std::vector<double>& values() const noexcept { return p_; }

 private:
  int start_age_;
  std::vector<double> p_;
};

// rates[s] is the central death rate at age start_age + s; one rate is needed
// for each age below the limit. Constant force within each year of age.
SurvivalCurve survival_from_rates(std::span<const double> rates, int start_age,
                                  const AnnuityBasis& basis);

// Monthly life annuity-due of 1/12 per month, in years of annual payment.
double annuity_monthly(const SurvivalCurve& curve, const AnnuityBasis& basis);
double annuity_monthly_v(const SurvivalCurve& curve, double v);

// Fair counting month: 12 times the monthly annuity-due value.
double fair_cm(const SurvivalCurve& curve, const AnnuityBasis& basis);

// Proportional subsidy fair / official - 1.
double subsidy(double fair_months, double official_months);

// Statutory counting months by retirement age, ages 40 to 70.
constexpr int kOfficialFirstAge = 40;
constexpr int kOfficialLastAge = 70;
constexpr int kOfficialScheduleVersion = 1;
int official_cm(int age);
std::string official_schedule_csv();

// Gap between annuity values of a dominating and a dominated curve.
double annuity_gap(const SurvivalCurve& hi, const SurvivalCurve& lo, double r);

// Rounds half away from zero at the given number of decimals.
double round_half_away(double value, int decimals);

}  // namespace ndc
