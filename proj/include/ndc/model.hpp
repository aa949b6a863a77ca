#pragma once

#include <vector>

#include "ndc/annuity.hpp"
#include "ndc/hermite.hpp"
#include "ndc/national_lc.hpp"

namespace ndc {

// Fitted mortality-differentiated surface: group baselines from the Hermite
// specification plus the common national period effect.
struct MortalityModel {
  LCParams lc;
  HermiteSpec spec;
  AgeGrid grid;

  int groups() const { return spec.groups(); }

  // log m at (age, group) for a given value of the period index.
  double log_rate(int group, int age, double kappa) const;

  // Period rates for ages from_age .. grid.x1 - 1.
  std::vector<double> period_rates(int group, int from_age, double kappa) const;
};

double model_fair_cm(const MortalityModel& model, int group, int age, double kappa,
                     const AnnuityBasis& basis);

}  // namespace ndc
