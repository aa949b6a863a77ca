#include "ndc/subgroup_fit.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/Dense>

#include "ndc/errors.hpp"
#include "ndc/optim.hpp"

namespace ndc {

WaveIntervals default_wave_intervals() {
  return {{2011, 2.0}, {2013, 2.0}, {2015, 3.0}, {2018, 2.0}};
}

SubgroupPanel::SubgroupPanel(std::vector<SubgroupRecord> records, int groups,
                             WaveIntervals intervals)
    : records_(std::move(records)), groups_(groups), intervals_(std::move(intervals)) {
  if (groups_ < 1) throw ValidationError("subgroup panel needs at least one group");
  for (const auto& [wave, length] : intervals_) {
    if (!(length > 0.0)) {
      throw ValidationError("wave " + std::to_string(wave) + " has a non-positive interval");
    }
  }
  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const SubgroupRecord& r = records_[i];
    const std::string where = "record " + std::to_string(i + 1) + ": ";
    if (r.group < 0 || r.group >= groups_) {
      throw ValidationError(where + "group " + std::to_string(r.group + 1) + " outside 1.." +
                            std::to_string(groups_));
    }
    if (!intervals_.contains(r.wave)) {
      throw ValidationError(where + "wave " + std::to_string(r.wave) +
                            " has no configured interval length");
    }
    if (!(r.exposure >= 0.0) || !(r.deaths >= 0.0)) {
      throw ValidationError(where + "negative exposure or deaths");
    }
    if (r.deaths > r.exposure) throw ValidationError(where + "deaths exceed exposure");
    if (!seen.emplace(r.age, r.group, r.wave).second) {
      throw ValidationError(where + "duplicate (age, group, wave) cell");
    }
  }
}

double SubgroupPanel::interval(int wave) const {
  const auto it = intervals_.find(wave);
  if (it == intervals_.end()) {
    throw DomainError("wave " + std::to_string(wave) + " has no configured interval length");
  }
  return it->second;
}

std::vector<PooledCell> build_pooled(const SubgroupPanel& panel, const LCParams& lc) {
  std::map<std::pair<int, int>, PooledCell> pooled;  // (group, age)
  for (const SubgroupRecord& r : panel.records()) {
    if (r.wave < lc.first_year || r.wave > lc.last_year()) {
      throw DomainError("wave year " + std::to_string(r.wave) +
                        " is not covered by the Lee-Carter period index");
    }
    const double adjust = std::exp(lc.beta_at(r.age) * lc.kappa_at(r.wave));
    PooledCell& c = pooled[{r.group, r.age}];
    c.age = r.age;
    c.group = r.group;
    c.deaths += r.deaths / panel.interval(r.wave);
    c.exposure += r.exposure * adjust;
  }
  std::vector<PooledCell> out;
  out.reserve(pooled.size());
  for (const auto& [key, cell] : pooled) out.push_back(cell);
  return out;
}

double q_objective(const HermiteSpec& spec, std::span<const PooledCell> cells, const AgeGrid& grid) {
  double q = 0.0;
  for (const PooledCell& c : cells) {
    if (c.exposure <= 0.0) continue;
    const double a = alpha_eval(spec, c.group, c.age, grid);
    q += c.deaths * a - c.exposure * std::exp(a);
  }
  return q;
}

double pooled_log_likelihood(const HermiteSpec& spec, std::span<const PooledCell> cells,
                             const AgeGrid& grid) {
  double ll = 0.0;
  for (const PooledCell& c : cells) {
    if (c.exposure <= 0.0) continue;
    const double a = alpha_eval(spec, c.group, c.age, grid);
    ll += c.deaths * (std::log(c.exposure) + a) - c.exposure * std::exp(a) -
          std::lgamma(c.deaths + 1.0);
  }
  return ll;
}

ModelScores model_scores(double log_likelihood, int parameters, int observations) {
  ModelScores s;
  s.parameters = parameters;
  s.observations = observations;
  s.log_likelihood = log_likelihood;
  s.aic = 2.0 * parameters - 2.0 * log_likelihood;
  s.bic = parameters * std::log(static_cast<double>(observations)) - 2.0 * log_likelihood;
  return s;
}

ModelScores model_scores(const HsmFitReport& report, Variant variant, int groups) {
  return model_scores(report.log_likelihood, free_parameter_count(variant, groups),
                      report.cells_used);
}

double group_surface(const HermiteSpec& spec, const LCParams& lc, const AgeGrid& grid, int age,
                     int group, int year) {
  return std::exp(alpha_eval(spec, group, age, grid) + lc.beta_at(age) * lc.kappa_at(year));
}

// ---------------------------------------------------------------------------

namespace {

// Value with its gradient with respect to the unconstrained vector.
struct Tangent {
  double v = 0.0;
  Eigen::VectorXd d;

  static Tangent variable(double value, Eigen::Index index, Eigen::Index n) {
    Tangent t{value, Eigen::VectorXd::Zero(n)};
    t.d[index] = 1.0;
    return t;
  }
};

Tangent operator+(const Tangent& a, const Tangent& b) { return {a.v + b.v, a.d + b.d}; }
Tangent operator-(const Tangent& a, const Tangent& b) { return {a.v - b.v, a.d - b.d}; }
Tangent operator*(const Tangent& a, const Tangent& b) { return {a.v * b.v, a.d * b.v + b.d * a.v}; }
Tangent operator*(double s, const Tangent& a) { return {s * a.v, s * a.d}; }
Tangent exp(const Tangent& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
Tangent sigmoid(const Tangent& a) {
  const double s = 1.0 / (1.0 + std::exp(-a.v));
  return {s, s * (1.0 - s) * a.d};
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Coefficients in natural order: theta[J], omega[nw], mu0[nm], mu1[1].
struct Natural {
  std::vector<Tangent> theta, omega, mu0, mu1;
};

class Reparam {
 public:
  Reparam(Variant variant, const ShapeConstraints& c, int groups)
      : layout_(layout_of(variant)), c_(c), J_(groups) {
    nw_ = layout_.omega_by_group ? J_ : 1;
    nm_ = layout_.mu0_by_group ? J_ : 1;
    n_ = J_ + nw_ + nm_ + 1;
    if (c_.non_crossover && c_.mu0_monotone_nonneg && layout_.mu0_by_group && !c_.theta_monotone &&
        J_ > 1) {
      throw ValidationError(
          "non-crossover with monotone initial slopes requires the theta ordering constraint");
    }
  }

  Eigen::Index size() const { return n_; }

  Natural map(const Eigen::VectorXd& u) const {
    Natural p;
    Eigen::Index k = 0;
    const auto var = [&](Eigen::Index i) { return Tangent::variable(u[i], i, n_); };
    for (int j = 0; j < J_; ++j, ++k) {
      if (c_.theta_monotone && j > 0) {
        p.theta.push_back(p.theta.back() - exp(var(k)));
      } else {
        p.theta.push_back(var(k));
      }
    }
    for (int j = 0; j < nw_; ++j, ++k) p.omega.push_back(var(k));
    for (int j = 0; j < nm_; ++j, ++k) {
      if (!layout_.mu0_by_group || j == 0) {
        p.mu0.push_back(c_.mu0_monotone_nonneg ? exp(var(k)) : var(k));
        continue;
      }
      const Tangent gap = p.theta[static_cast<std::size_t>(j - 1)] - p.theta[static_cast<std::size_t>(j)];
      Tangent inc;
      if (c_.mu0_monotone_nonneg) {
        inc = c_.non_crossover ? 3.0 * (gap * sigmoid(var(k))) : exp(var(k));
      } else if (c_.non_crossover) {
        inc = 3.0 * gap - exp(var(k));
      } else {
        p.mu0.push_back(var(k));
        continue;
      }
      p.mu0.push_back(p.mu0.back() + inc);
    }
    p.mu1.push_back(var(k));
    return p;
  }

  // Inverse map from a feasible natural start; increments are floored so the
  // logs stay finite.
  Eigen::VectorXd inverse(const std::vector<double>& theta, const std::vector<double>& omega,
                          const std::vector<double>& mu0, double mu1, double mu0_share) const {
    Eigen::VectorXd u(n_);
    Eigen::Index k = 0;
    for (int j = 0; j < J_; ++j, ++k) {
      const auto js = static_cast<std::size_t>(j);
      u[k] = (c_.theta_monotone && j > 0) ? std::log(std::max(theta[js - 1] - theta[js], 1e-4))
                                          : theta[js];
    }
    for (int j = 0; j < nw_; ++j, ++k) u[k] = omega[static_cast<std::size_t>(j)];
    for (int j = 0; j < nm_; ++j, ++k) {
      const auto js = static_cast<std::size_t>(j);
      if (!layout_.mu0_by_group || j == 0) {
        u[k] = c_.mu0_monotone_nonneg ? std::log(std::max(mu0[js], 1e-4)) : mu0[js];
      } else if (c_.mu0_monotone_nonneg) {
        u[k] = c_.non_crossover ? logit(mu0_share) : std::log(std::max(mu0[js] - mu0[js - 1], 1e-4));
      } else if (c_.non_crossover) {
        const double gap = theta[js - 1] - theta[js];
        u[k] = std::log(std::max(3.0 * gap - (mu0[js] - mu0[js - 1]), 1e-4));
      } else {
        u[k] = mu0[js];
      }
    }
    u[k] = mu1;
    return u;
  }

  int omega_count() const { return nw_; }
  int mu0_count() const { return nm_; }

 private:
  Layout layout_;
  ShapeConstraints c_;
  int J_;
  int nw_ = 1, nm_ = 1;
  Eigen::Index n_ = 0;
};

struct CellBasis {
  int group;
  double deaths, exposure;
  BasisValues h;
};

std::vector<double> values(const std::vector<Tangent>& ts) {
  std::vector<double> out;
  out.reserve(ts.size());
  for (const Tangent& t : ts) out.push_back(t.v);
  return out;
}

HermiteSpec to_spec(Variant variant, const Natural& p) {
  return HermiteSpec(variant, values(p.theta), values(p.omega), values(p.mu0), values(p.mu1));
}

// Single shared curve for all groups, unconstrained, as the common start.
std::array<double, 4> pooled_curve(const std::vector<CellBasis>& cells, double scale) {
  const optim::Objective f = [&](const Eigen::VectorXd& c, Eigen::VectorXd* grad) {
    double q = 0.0;
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    for (const CellBasis& cb : cells) {
      const double a = c[0] * cb.h.h00 + c[1] * cb.h.h01 + c[2] * cb.h.h10 + c[3] * cb.h.h11;
      const double mean = cb.exposure * std::exp(a);
      q += cb.deaths * a - mean;
      g += (cb.deaths - mean) * Eigen::Vector4d(cb.h.h00, cb.h.h01, cb.h.h10, cb.h.h11);
    }
    if (grad) *grad = -g / scale;
    return -q / scale;
  };
  // Deaths-weighted least squares on empirical log rates.
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b = Eigen::Vector4d::Zero();
  for (const CellBasis& cb : cells) {
    const double w = cb.deaths + 0.5;
    const double y = std::log((cb.deaths + 0.5) / cb.exposure);
    const Eigen::Vector4d h(cb.h.h00, cb.h.h01, cb.h.h10, cb.h.h11);
    A += w * h * h.transpose();
    b += w * y * h;
  }
  Eigen::VectorXd c0 = A.ldlt().solve(b);
  if (!c0.allFinite()) c0 = Eigen::Vector4d(-5.0, -1.0, 5.0, 1.0);
  const optim::Result r = optim::minimize_bfgs(f, c0);
  return {r.x[0], r.x[1], r.x[2], r.x[3]};
}

}  // namespace

HsmFit fit_hsm(std::span<const PooledCell> cells, Variant variant,
               const ShapeConstraints& constraints, const AgeGrid& grid, int groups) {
  if (variant == Variant::GompertzFree || variant == Variant::GompertzConstrained) {
    throw ValidationError("fit_hsm handles HSM-I..IV; use gompertz_fit for Gompertz variants");
  }
  grid.validate();
  if (groups < 1) throw ValidationError("fit_hsm needs at least one group");

  std::vector<CellBasis> data;
  std::vector<int> per_group(static_cast<std::size_t>(groups), 0);
  int dropped = 0;
  double scale = 0.0;
  for (const PooledCell& c : cells) {
    if (c.group < 0 || c.group >= groups) {
      throw DomainError("cell group " + std::to_string(c.group) + " outside [0, " +
                        std::to_string(groups - 1) + "]");
    }
    if (c.age < grid.x0 || c.age > grid.x1) {
      throw DomainError("cell age " + std::to_string(c.age) + " outside the age grid");
    }
    if (!(c.exposure > 0.0)) {
      ++dropped;
      continue;
    }
    data.push_back({c.group, c.deaths, c.exposure, hermite_basis(grid.standardize(c.age))});
    ++per_group[static_cast<std::size_t>(c.group)];
    scale += c.deaths;
  }
  for (int j = 0; j < groups; ++j) {
    if (per_group[static_cast<std::size_t>(j)] == 0) {
      throw ValidationError("group " + std::to_string(j + 1) + " has no cell with positive exposure");
    }
  }
  scale = std::max(scale, 1.0);

  const Reparam reparam(variant, constraints, groups);
  const Layout layout = layout_of(variant);
  const Eigen::Index n = reparam.size();
  const int nw = reparam.omega_count();
  const int nm = reparam.mu0_count();

  const optim::Objective objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    const Natural p = reparam.map(u);
    double q = 0.0;
    std::vector<double> g_theta(static_cast<std::size_t>(groups), 0.0);
    std::vector<double> g_omega(static_cast<std::size_t>(nw), 0.0);
    std::vector<double> g_mu0(static_cast<std::size_t>(nm), 0.0);
    double g_mu1 = 0.0;
    for (const CellBasis& cb : data) {
      const auto j = static_cast<std::size_t>(cb.group);
      const std::size_t jw = layout.omega_by_group ? j : 0;
      const std::size_t jm = layout.mu0_by_group ? j : 0;
      const double a = p.theta[j].v * cb.h.h00 + p.omega[jw].v * cb.h.h01 +
                       p.mu0[jm].v * cb.h.h10 + p.mu1[0].v * cb.h.h11;
      const double mean = cb.exposure * std::exp(a);
      q += cb.deaths * a - mean;
      const double r = cb.deaths - mean;
      g_theta[j] += r * cb.h.h00;
      g_omega[jw] += r * cb.h.h01;
      g_mu0[jm] += r * cb.h.h10;
      g_mu1 += r * cb.h.h11;
    }
    if (grad) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
      for (std::size_t j = 0; j < g_theta.size(); ++j) g += g_theta[j] * p.theta[j].d;
      for (std::size_t j = 0; j < g_omega.size(); ++j) g += g_omega[j] * p.omega[j].d;
      for (std::size_t j = 0; j < g_mu0.size(); ++j) g += g_mu0[j] * p.mu0[j].d;
      g += g_mu1 * p.mu1[0].d;
      *grad = -g / scale;
    }
    if (!std::isfinite(q)) return std::numeric_limits<double>::infinity();
    return -q / scale;
  };

  // Common start: one shared curve plus multiplicative group offsets.
  const std::array<double, 4> base = pooled_curve(data, scale);
  std::vector<double> offset(static_cast<std::size_t>(groups), 0.0);
  {
    std::vector<double> dsum(offset.size(), 0.0), msum(offset.size(), 0.0);
    for (const CellBasis& cb : data) {
      const auto j = static_cast<std::size_t>(cb.group);
      dsum[j] += cb.deaths;
      msum[j] += cb.exposure * std::exp(base[0] * cb.h.h00 + base[1] * cb.h.h01 +
                                        base[2] * cb.h.h10 + base[3] * cb.h.h11);
    }
    for (std::size_t j = 0; j < offset.size(); ++j) {
      offset[j] = std::log(std::max(dsum[j], 0.5) / msum[j]);
    }
  }

  struct StartRecipe {
    double gap_scale;    // multiplies the data-implied theta gaps
    double gap_floor;    // minimum gap between adjacent thetas
    double mu0_share;    // fraction of the non-crossover allowance used
  };
  static constexpr std::array<StartRecipe, kHsmStarts> recipes = {{
      {1.0, 0.01, 0.25}, {2.0, 0.02, 0.5}, {0.5, 0.005, 0.1}, {0.0, 0.05, 0.75}, {1.0, 0.1, 0.05}}};

  HsmFitReport report;
  report.cells_used = static_cast<int>(data.size());
  report.cells_dropped = dropped;
  std::optional<optim::Result> best;
  optim::Result best_any;
  bool have_any = false;
  for (int s = 0; s < kHsmStarts; ++s) {
    const StartRecipe& recipe = recipes[static_cast<std::size_t>(s)];
    std::vector<double> theta(static_cast<std::size_t>(groups));
    for (int j = 0; j < groups; ++j) {
      theta[static_cast<std::size_t>(j)] = base[0] + recipe.gap_scale * offset[static_cast<std::size_t>(j)];
    }
    if (constraints.theta_monotone) {
      for (std::size_t j = 1; j < theta.size(); ++j) {
        theta[j] = std::min(theta[j], theta[j - 1] - recipe.gap_floor);
      }
    }
    std::vector<double> omega(static_cast<std::size_t>(nw), base[1]);
    std::vector<double> mu0(static_cast<std::size_t>(nm), std::max(base[2], 0.1));
    for (std::size_t j = 1; j < mu0.size(); ++j) {
      const double gap = theta[j - 1] - theta[j];
      mu0[j] = mu0[j - 1] + (constraints.non_crossover ? 3.0 * gap * recipe.mu0_share
                                                       : recipe.mu0_share);
    }
    const Eigen::VectorXd u0 = reparam.inverse(theta, omega, mu0, base[3], recipe.mu0_share);

    optim::Options opts;
    opts.gradient_tolerance = 1e-11;
    opts.max_iterations = 20000;
    const optim::Result r = optim::minimize_bfgs(objective, u0, opts);
    report.start_q.push_back(-r.f * scale);
    report.iterations += r.iterations;
    if (!have_any || r.f < best_any.f) {
      best_any = r;
      have_any = true;
    }
    if (r.converged && (!best || r.f < best->f)) {
      best = r;
      report.best_start = s;
    }
  }
  if (!best) {
    throw ConvergenceError("grouped Hermite fit did not converge from any start",
                           {best_any.x.data(), best_any.x.data() + best_any.x.size()},
                           best_any.gradient_norm, report.iterations);
  }

  HsmFit fit{to_spec(variant, reparam.map(best->x)), report};
  fit.report.gradient_norm = best->gradient_norm;
  fit.report.q = q_objective(fit.spec, cells, grid);
  fit.report.log_likelihood = pooled_log_likelihood(fit.spec, cells, grid);
  return fit;
}

}  // namespace ndc
