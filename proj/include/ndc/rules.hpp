#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ndc/annuity.hpp"
#include "ndc/model.hpp"

namespace ndc {

// Representative incomes K_j (quintile means) and bracket boundaries.
// Bracket j (zero-based) is (lower[j], lower[j+1]]; income 0 belongs to bracket 0
// and the last bracket is unbounded above.
struct IncomeQuintiles {
  std::vector<double> means;   // K_1..K_J, CNY per year
  std::vector<double> lower;   // K̄_0..K̄_{J-1}; lower[0] == 0

  int size() const { return static_cast<int>(means.size()); }
  void validate() const;
  // Zero-based bracket containing income k.
  int bracket_of(double k) const;
  // Upper boundary of bracket j; infinity for the last one.
  double upper(int j) const;

  static IncomeQuintiles reference();
};

// Fair counting months at the anchor incomes.
struct FairAnchors {
  std::vector<double> months;  // M*_1..M*_J

  int size() const { return static_cast<int>(months.size()); }
  void validate() const;
  // Normalized anchor benefits q_j = K_j / M*_j.
  std::vector<double> targets(const IncomeQuintiles& quintiles) const;

  static FairAnchors reference();
};

struct AnchorSet {
  IncomeQuintiles quintiles;
  FairAnchors anchors;
  std::string source = "reference";

  void validate() const;
  static AnchorSet reference();
};

constexpr double kDefaultAccountScale = 2.4;

// Log-mortality interpolated linearly across the quintile means, clamped outside.
double alpha_continuous(double k, std::span<const double> alpha_by_group,
                        const IncomeQuintiles& quintiles);

// Continuous fair counting month over income at one retirement age.
class FairBenchmark {
 public:
  // log_rates[j][s] is log m at age start_age + s for quintile j, up to the limit age.
  FairBenchmark(IncomeQuintiles quintiles, std::vector<std::vector<double>> log_rates,
                int start_age, AnnuityBasis basis);

  static FairBenchmark from_model(const MortalityModel& model, const IncomeQuintiles& quintiles,
                                  int age, double kappa, const AnnuityBasis& basis);

  // Reference log-mortality curve shifted per quintile so that each quintile's
  // fair counting month equals its anchor.
  static FairBenchmark anchor_matched(const AnchorSet& anchors, const AnnuityBasis& basis,
                                      int age = 60);

  double fair_cm(double k) const;
  double group_fair_cm(int group) const;
  const IncomeQuintiles& quintiles() const noexcept { return quintiles_; }
  const std::vector<std::vector<double>>& log_rates() const noexcept { return log_rates_; }
  int start_age() const noexcept { return start_age_; }

 private:
  IncomeQuintiles quintiles_;
  std::vector<std::vector<double>> log_rates_;
  int start_age_;
  AnnuityBasis basis_;
};

// Reference curve used by FairBenchmark::anchor_matched, log m at an age.
double reference_log_mortality(int age);

double fair_cm_continuous(double k, const FairBenchmark& benchmark);

enum class RuleKind { AvgStep, AvgLinear, MarginalStep, MarginalLinear };

std::string_view to_string(RuleKind kind);
RuleKind rule_kind_from_string(std::string_view name);

// Calibrated counting-month rule.
//   AvgStep:        knots = bracket lower bounds, values = average divisor per bracket
//   AvgLinear:      knots = quintile means,       values = average divisor at each mean
//   MarginalStep:   knots = bracket lower bounds, values = marginal divisor per bracket,
//                   cumulative = normalized benefit accrued at each lower bound
//   MarginalLinear: knots = quintile means,       values = marginal divisor at each mean,
//                   cumulative = normalized benefit at each mean
struct RuleSchedule {
  RuleKind kind = RuleKind::AvgStep;
  std::vector<double> knots;
  std::vector<double> values;
  std::vector<double> cumulative;
  double objective = 0.0;
  std::string anchor_source;

  void validate() const;
  bool operator==(const RuleSchedule&) const = default;
};

double method1_avg(double k, const FairAnchors& anchors, const IncomeQuintiles& quintiles);
double method2_avg(double k, const FairAnchors& anchors, const IncomeQuintiles& quintiles);

RuleSchedule method1_schedule(const AnchorSet& anchors);
RuleSchedule method2_schedule(const AnchorSet& anchors);

// Marginal divisor of an average-divisor rule on a linear segment.
double implied_marginal(double m, double m_slope, double k);

// h / (B(K+h)/φ - B(K)/φ); empty when the benefit does not increase (a notch).
std::optional<double> implied_marginal_fd(const RuleSchedule& schedule, double k, double h);

struct ExactSchedule {
  std::vector<double> values;
  std::vector<double> cumulative;
};

// Exact anchor matching for the bracket marginal rule.
ExactSchedule method3_exact(const FairAnchors& anchors, const IncomeQuintiles& quintiles);
// C_{j-1} < q_j <= C_{j-1} + (K_j - K̄_{j-1}) / δ_{j-1} at every step.
bool method3_monotone_feasible(const FairAnchors& anchors, const IncomeQuintiles& quintiles);
RuleSchedule method3_calibrate(const AnchorSet& anchors);
double method3_benefit(double k, const RuleSchedule& schedule);

// Normalized benefit accrued from K_lo to K_hi when the marginal divisor moves
// linearly from a to b.
double segment_integral(double a, double b, double k_lo, double k_hi);
// Same accrual from K_lo up to k in [K_lo, K_hi].
double partial_integral(double a, double b, double k_lo, double k_hi, double k);

// Exact anchor matching for the interpolated marginal rule.
ExactSchedule method4_exact(const FairAnchors& anchors, const IncomeQuintiles& quintiles);
bool method4_monotone_feasible(const FairAnchors& anchors, const IncomeQuintiles& quintiles);
RuleSchedule method4_calibrate(const AnchorSet& anchors);
double method4_benefit(double k, const RuleSchedule& schedule);

// Calibration objectives Σ (Y_j(δ)/q_j - 1)^2 for a candidate marginal schedule.
double method3_objective(std::span<const double> delta, const AnchorSet& anchors);
double method4_objective(std::span<const double> delta, const AnchorSet& anchors);

// Anchor benefits Y_j(δ) generated by a candidate marginal schedule.
std::vector<double> method3_anchor_benefits(std::span<const double> delta,
                                            const IncomeQuintiles& quintiles);
std::vector<double> method4_anchor_benefits(std::span<const double> delta,
                                            const IncomeQuintiles& quintiles);

// B(K)/φ for any rule.
double normalized_benefit(double k, const RuleSchedule& schedule);
double benefit(double k, const RuleSchedule& schedule, double phi = kDefaultAccountScale);
// Implied average divisor φK/B(K); the K -> 0 limit at zero income.
double average_cm(double k, const RuleSchedule& schedule);
// Marginal divisor just above k.
double marginal_cm(double k, const RuleSchedule& schedule);

double residual_subsidy(double k, const RuleSchedule& schedule, const FairBenchmark& benchmark);

// Isotonic (non-decreasing) least-squares projection.
std::vector<double> monotone_projection(std::span<const double> values);

}  // namespace ndc
