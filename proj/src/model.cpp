#include "ndc/model.hpp"

#include <cmath>

#include "ndc/errors.hpp"

namespace ndc {

double MortalityModel::log_rate(int group, int age, double kappa) const {
  return alpha_eval(spec, group, age, grid) + lc.beta_extended(age) * kappa;
}

std::vector<double> MortalityModel::period_rates(int group, int from_age, double kappa) const {
  if (from_age < grid.x0 || from_age >= grid.x1) {
    throw DomainError("age " + std::to_string(from_age) + " outside the model age grid");
  }
  std::vector<double> rates;
  rates.reserve(static_cast<std::size_t>(grid.x1 - from_age));
  for (int age = from_age; age < grid.x1; ++age) rates.push_back(std::exp(log_rate(group, age, kappa)));
  return rates;
}

double model_fair_cm(const MortalityModel& model, int group, int age, double kappa,
                     const AnnuityBasis& basis) {
  if (basis.limit_age != model.grid.x1) {
    throw ValidationError("annuity limit age must equal the model's oldest age");
  }
  const std::vector<double> rates = model.period_rates(group, age, kappa);
  return fair_cm(survival_from_rates(rates, age, basis), basis);
}

}  // namespace ndc
