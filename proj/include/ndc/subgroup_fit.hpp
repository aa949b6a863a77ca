#pragma once

#include <map>
#include <span>
#include <vector>

#include "ndc/cells.hpp"
#include "ndc/hermite.hpp"
#include "ndc/national_lc.hpp"

namespace ndc {

// Starting wave year -> length of the interval to the next wave (years).
using WaveIntervals = std::map<int, double>;

// Intervals of the four observed inter-wave periods of the 2011-2020 survey.
WaveIntervals default_wave_intervals();

struct SubgroupRecord {
  int age = 0;
  int group = 0;  // zero-based
  int wave = 0;   // starting wave year
  double exposure = 0.0;  // persons at the start of the interval
  double deaths = 0.0;    // deaths over the whole interval
};

class SubgroupPanel {
 public:
  SubgroupPanel(std::vector<SubgroupRecord> records, int groups,
                WaveIntervals intervals = default_wave_intervals());

  const std::vector<SubgroupRecord>& records() const noexcept { return records_; }
  int groups() const noexcept { return groups_; }
  const WaveIntervals& intervals() const noexcept { return intervals_; }
  double interval(int wave) const;

 private:
  std::vector<SubgroupRecord> records_;
  int groups_;
  WaveIntervals intervals_;
};

// Annualizes deaths and rescales exposure by exp(beta_x kappa_wave) so the
// pooled cells behave as one cross-section at the LC reference year.
std::vector<PooledCell> build_pooled(const SubgroupPanel& panel, const LCParams& lc);

// Sum over cells of D * alpha - E * exp(alpha), constants omitted.
double q_objective(const HermiteSpec& spec, std::span<const PooledCell> cells, const AgeGrid& grid);

// Full Poisson log-likelihood including log-factorial terms; zero-exposure cells skipped.
double pooled_log_likelihood(const HermiteSpec& spec, std::span<const PooledCell> cells,
                             const AgeGrid& grid);

struct ShapeConstraints {
  bool theta_monotone = true;       // theta_{j+1} <= theta_j
  bool mu0_monotone_nonneg = true;  // 0 <= mu0_j <= mu0_{j+1}
  bool non_crossover = true;        // mu0_{j+1} - mu0_j <= -3 (theta_{j+1} - theta_j)

  static ShapeConstraints none() { return {false, false, false}; }
};

struct HsmFitReport {
  double q = 0.0;
  double log_likelihood = 0.0;
  int cells_used = 0;
  int cells_dropped = 0;
  int iterations = 0;
  int best_start = 0;
  double gradient_norm = 0.0;
  std::vector<double> start_q;  // objective reached from each start
};

struct HsmFit {
  HermiteSpec spec;
  HsmFitReport report;
};

constexpr int kHsmStarts = 5;

// Maximizes q_objective over a grouped Hermite variant under the active shape
// constraints. The constraints are built into a smooth reparametrization so any
// returned spec satisfies them by construction.
HsmFit fit_hsm(std::span<const PooledCell> cells, Variant variant,
               const ShapeConstraints& constraints, const AgeGrid& grid, int groups);

struct ModelScores {
  int parameters = 0;
  int observations = 0;
  double log_likelihood = 0.0;
  double aic = 0.0;
  double bic = 0.0;
};

ModelScores model_scores(double log_likelihood, int parameters, int observations);
ModelScores model_scores(const HsmFitReport& report, Variant variant, int groups);

// exp(alpha_{x,j} + beta_x kappa_t); all indices must lie in the fitted ranges.
double group_surface(const HermiteSpec& spec, const LCParams& lc, const AgeGrid& grid, int age,
                     int group, int year);

}  // namespace ndc
