#include "ndc/annuity.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "ndc/errors.hpp"

namespace ndc {

namespace {

constexpr std::array<int, kOfficialLastAge - kOfficialFirstAge + 1> kOfficialMonths = {
    233, 230, 226, 223, 220, 216, 212, 207, 204, 199,  // 40-49
    195, 190, 185, 180, 175, 170, 164, 158, 152, 145,  // 50-59
    139, 132, 125, 117, 109, 101, 93,  84,  75,  65,   // 60-69
    56};                                               // 70

}  // namespace

void AnnuityBasis::validate() const {
  if (!(r > -1.0) || !std::isfinite(r)) {
    throw DomainError("discount rate must exceed -1, got " + std::to_string(r));
  }
}

SurvivalCurve::SurvivalCurve(int start_age, std::vector<double> monthly)
    : start_age_(start_age), p_(std::move(monthly)) {
  if (p_.empty() || p_.front() != 1.0) throw ValidationError("survival curve must start at 1");
  for (std::size_t m = 0; m < p_.size(); ++m) {
    if (!(p_[m] >= 0.0 && p_[m] <= 1.0)) {
      throw ValidationError("survival probability outside [0, 1] at month " + std::to_string(m));
    }
    if (m > 0 && p_[m] > p_[m - 1]) {
      throw ValidationError("survival curve increases at month " + std::to_string(m));
    }
  }
  if (p_.back() != 0.0) throw ValidationError("survival curve must reach zero at the limit age");
}

SurvivalCurve survival_from_rates(std::span<const double> rates, int start_age,
                                  const AnnuityBasis& basis) {
  basis.validate();
  if (start_age >= basis.limit_age) {
    throw DomainError("limit age " + std::to_string(basis.limit_age) +
                      " must exceed the starting age " + std::to_string(start_age));
  }
  const auto years = static_cast<std::size_t>(basis.limit_age - start_age);
  if (rates.size() < years) {
    throw DomainError("missing death rate at age " +
                      std::to_string(start_age + static_cast<int>(rates.size())) +
                      " (needed up to " + std::to_string(basis.limit_age - 1) + ")");
  }
  std::vector<double> p(12 * years + 1);
  double hazard = 0.0;  // cumulative force at the start of the year of age
  for (std::size_t s = 0; s < years; ++s) {
    const double m = rates[s];
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw DomainError("invalid death rate at age " + std::to_string(start_age + static_cast<int>(s)));
    }
    for (std::size_t k = 0; k < 12; ++k) {
      p[12 * s + k] = std::exp(-(hazard + m * static_cast<double>(k) / 12.0));
    }
    hazard += m;
  }
  p.back() = 0.0;
  return SurvivalCurve(start_age, std::move(p));
}

double annuity_monthly_v(const SurvivalCurve& curve, double v) {
  if (!(v >= 0.0)) throw DomainError("discount factor must be non-negative");
  const double step = std::pow(v, 1.0 / 12.0);
  double discount = 1.0;
  double total = 0.0;
  for (double p : curve.values()) {
    total += discount * p;
    discount *= step;
  }
  return total / 12.0;
}

double annuity_monthly(const SurvivalCurve& curve, const AnnuityBasis& basis) {
  basis.validate();
  return annuity_monthly_v(curve, basis.v());
}

double fair_cm(const SurvivalCurve& curve, const AnnuityBasis& basis) {
  return 12.0 * annuity_monthly(curve, basis);
}

double subsidy(double fair_months, double official_months) {
  if (!(official_months > 0.0)) {
    throw DomainError("official counting month must be positive");
  }
  return fair_months / official_months - 1.0;
}

int official_cm(int age) {
  if (age < kOfficialFirstAge || age > kOfficialLastAge) {
    throw DomainError("no official counting month for age " + std::to_string(age) + " (40..70)");
  }
  return kOfficialMonths[static_cast<std::size_t>(age - kOfficialFirstAge)];
}

std::string official_schedule_csv() {
  std::ostringstream out;
  out << "age,official_cm\n";
  for (int age = kOfficialFirstAge; age <= kOfficialLastAge; ++age) {
    out << age << ',' << official_cm(age) << '\n';
  }
  return out.str();
}

double annuity_gap(const SurvivalCurve& hi, const SurvivalCurve& lo, double r) {
  if (hi.start_age() != lo.start_age() || hi.months() != lo.months()) {
    throw ValidationError("annuity_gap: curves cover different ages");
  }
  for (std::size_t m = 0; m < hi.months(); ++m) {
    if (hi[m] < lo[m]) {
      throw ValidationError("annuity_gap: dominance violated at month " + std::to_string(m));
    }
  }
  if (!(r > -1.0)) throw DomainError("discount rate must exceed -1");
  // Summed term by term so the gap carries no cancellation error.
  const double step = std::pow(1.0 / (1.0 + r), 1.0 / 12.0);
  double discount = 1.0;
  double total = 0.0;
  for (std::size_t m = 0; m < hi.months(); ++m) {
    total += discount * (hi[m] - lo[m]);
    discount *= step;
  }
  return total / 12.0;
}

double round_half_away(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

}  // namespace ndc
