#include "ndc/rules.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ndc/errors.hpp"
#include "ndc/hermite.hpp"
#include "ndc/optim.hpp"

namespace ndc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) return false;
  }
  return true;
}

// Number of entries of knots[1..] strictly below k: the bracket of k under
// half-open (lower, upper] brackets.
std::size_t bracket_index(const std::vector<double>& knots, double k) {
  return static_cast<std::size_t>(std::lower_bound(knots.begin() + 1, knots.end(), k) -
                                  (knots.begin() + 1));
}

// Bracket of the right neighbourhood of k.
std::size_t bracket_index_right(const std::vector<double>& knots, double k) {
  return static_cast<std::size_t>(std::upper_bound(knots.begin() + 1, knots.end(), k) -
                                  (knots.begin() + 1));
}

// Clamped linear interpolation with exact knot values.
double interpolate(const std::vector<double>& x, std::span<const double> y, double k) {
  if (k <= x.front()) return y.front();
  if (k >= x.back()) return y.back();
  const auto j = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), k) - x.begin()) - 1;
  const double t = (k - x[j]) / (x[j + 1] - x[j]);
  return y[j] + t * (y[j + 1] - y[j]);
}

// log(b/a) / (b - a) and its partial derivatives, stable near a = b.
struct LogRatio {
  double g, dg_da, dg_db;
};

LogRatio log_ratio(double a, double b) {
  const double r = (b - a) / a;
  if (std::abs(r) < 1e-3) {
    // S(r) = sum (-r)^n / (n + 1), g = S / a.
    double s = 0.0, ds = 0.0, pw = 1.0;
    for (int n = 0; n < 8; ++n) {
      const double sign = (n % 2 == 0) ? 1.0 : -1.0;
      s += sign * pw / (n + 1);
      const double nn = n + 1;
      ds += ((n + 1) % 2 == 0 ? 1.0 : -1.0) * nn * pw / (nn + 1);
      pw *= r;
    }
    return {s / a, -(s + (1.0 + r) * ds) / (a * a), ds / (a * a)};
  }
  const double d = b - a;
  const double g = std::log1p(r) / d;
  return {g, (g - 1.0 / a) / d, (1.0 / b - g) / d};
}

void check_delta(std::span<const double> delta, int groups) {
  if (static_cast<int>(delta.size()) != groups) {
    throw ValidationError("marginal schedule has " + std::to_string(delta.size()) +
                          " values, expected " + std::to_string(groups));
  }
  for (const double d : delta) {
    if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("marginal counting months must be positive");
  }
}

// Y_j and dY_j/dδ_k for both marginal rules.
struct AnchorJacobian {
  std::vector<double> y;
  Eigen::MatrixXd dy;  // J x J, lower triangular
};

AnchorJacobian method3_jacobian(std::span<const double> delta, const IncomeQuintiles& q) {
  const int n = q.size();
  AnchorJacobian out{std::vector<double>(static_cast<std::size_t>(n)), Eigen::MatrixXd::Zero(n, n)};
  double c = 0.0;
  for (int j = 0; j < n; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double dj = delta[uj];
    const double partial = q.means[uj] - q.lower[uj];
    out.y[uj] = c + partial / dj;
    for (int k = 0; k < j; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      out.dy(j, k) = -(q.lower[uk + 1] - q.lower[uk]) / (delta[uk] * delta[uk]);
    }
    out.dy(j, j) = -partial / (dj * dj);
    if (j + 1 < n) c += (q.lower[uj + 1] - q.lower[uj]) / dj;
  }
  return out;
}

AnchorJacobian method4_jacobian(std::span<const double> delta, const IncomeQuintiles& q) {
  const int n = q.size();
  AnchorJacobian out{std::vector<double>(static_cast<std::size_t>(n)), Eigen::MatrixXd::Zero(n, n)};
  out.y[0] = q.means[0] / delta[0];
  out.dy(0, 0) = -q.means[0] / (delta[0] * delta[0]);
  for (int j = 0; j + 1 < n; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double width = q.means[uj + 1] - q.means[uj];
    const LogRatio lr = log_ratio(delta[uj], delta[uj + 1]);
    out.y[uj + 1] = out.y[uj] + width * lr.g;
    out.dy.row(j + 1) = out.dy.row(j);
    out.dy(j + 1, j) += width * lr.dg_da;
    out.dy(j + 1, j + 1) += width * lr.dg_db;
  }
  return out;
}

using JacobianFn = AnchorJacobian (*)(std::span<const double>, const IncomeQuintiles&);

// Σ (Y_j/q_j - 1)^2 with its gradient in δ.
double anchor_objective(JacobianFn jac, std::span<const double> delta, const IncomeQuintiles& q,
                        const std::vector<double>& targets, Eigen::VectorXd* grad) {
  const AnchorJacobian a = jac(delta, q);
  const int n = q.size();
  double f = 0.0;
  Eigen::VectorXd w(n);
  for (int j = 0; j < n; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double e = a.y[uj] / targets[uj] - 1.0;
    f += e * e;
    w(j) = 2.0 * e / targets[uj];
  }
  if (grad != nullptr) *grad = a.dy.transpose() * w;
  return f;
}

struct Candidate {
  std::vector<double> delta;
  double objective = kInf;
};

// Monotone schedules as δ_1 = e^{u_1}, δ_k = δ_{k-1} + e^{u_k}.
Candidate exp_map_run(JacobianFn jac, const IncomeQuintiles& q, const std::vector<double>& targets,
                      const std::vector<double>& start, const optim::Options& options) {
  const int n = q.size();
  const double floor = 1e-4;
  Eigen::VectorXd u0(n);
  u0(0) = std::log(start[0]);
  for (int k = 1; k < n; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    u0(k) = std::log(std::max(start[uk] - start[uk - 1], floor));
  }
  auto map = [n](const Eigen::VectorXd& u) {
    std::vector<double> d(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      acc += std::exp(u(k));
      d[static_cast<std::size_t>(k)] = acc;
    }
    return d;
  };
  const optim::Objective objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    const std::vector<double> d = map(u);
    Eigen::VectorXd gd;
    const double f = anchor_objective(jac, d, q, targets, grad ? &gd : nullptr);
    if (!std::isfinite(f)) return kInf;
    if (grad != nullptr) {
      grad->resize(n);
      double tail = 0.0;
      for (int i = n - 1; i >= 0; --i) {
        tail += gd(i);
        (*grad)(i) = std::exp(u(i)) * tail;
      }
    }
    return f;
  };
  const optim::Result r = optim::minimize_bfgs(objective, u0, options);
  Candidate c{map(r.x), 0.0};
  c.objective = anchor_objective(jac, c.delta, q, targets, nullptr);
  return c;
}

// Minimizes over schedules whose values tie within each block; block values are
// free positive numbers. The result is kept only if it is monotone.
std::optional<Candidate> tie_pattern_run(JacobianFn jac, const IncomeQuintiles& q,
                                         const std::vector<double>& targets,
                                         const std::vector<int>& block_of,
                                         const std::vector<double>& start,
                                         const optim::Options& options) {
  const int n = q.size();
  const int blocks = block_of.back() + 1;
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(blocks);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(blocks);
  for (int k = 0; k < n; ++k) {
    z0(block_of[static_cast<std::size_t>(k)]) += std::log(start[static_cast<std::size_t>(k)]);
    count(block_of[static_cast<std::size_t>(k)]) += 1.0;
  }
  z0 = z0.cwiseQuotient(count);
  auto map = [&](const Eigen::VectorXd& z) {
    std::vector<double> d(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) d[static_cast<std::size_t>(k)] = std::exp(z(block_of[static_cast<std::size_t>(k)]));
    return d;
  };
  const optim::Objective objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    const std::vector<double> d = map(z);
    Eigen::VectorXd gd;
    const double f = anchor_objective(jac, d, q, targets, grad ? &gd : nullptr);
    if (!std::isfinite(f)) return kInf;
    if (grad != nullptr) {
      *grad = Eigen::VectorXd::Zero(blocks);
      for (int k = 0; k < n; ++k) (*grad)(block_of[static_cast<std::size_t>(k)]) += gd(k) * d[static_cast<std::size_t>(k)];
    }
    return f;
  };
  const optim::Result r = optim::minimize_bfgs(objective, z0, options);
  for (int b = 1; b < blocks; ++b) {
    if (r.x(b) < r.x(b - 1)) return std::nullopt;
  }
  Candidate c{map(r.x), 0.0};
  c.objective = anchor_objective(jac, c.delta, q, targets, nullptr);
  return c;
}

Candidate calibrate_marginal(JacobianFn jac, const AnchorSet& anchors,
                             const std::vector<double>& exact_start) {
  const IncomeQuintiles& q = anchors.quintiles;
  const std::vector<double> targets = anchors.anchors.targets(q);
  const int n = q.size();
  optim::Options options;
  options.max_iterations = 4000;
  options.gradient_tolerance = 1e-15;
  options.relative_f_tolerance = 1e-15;

  const std::vector<double> base = monotone_projection(exact_start);
  const std::vector<double> anchor_proj = monotone_projection(anchors.anchors.months);
  std::vector<std::vector<double>> starts{base, anchor_proj, base, base, base};
  for (double& d : starts[2]) d *= 1.01;
  for (double& d : starts[3]) d *= 0.99;
  const double mean = std::accumulate(base.begin(), base.end(), 0.0) / n;
  std::fill(starts[4].begin(), starts[4].end(), mean);

  Candidate best;
  auto consider = [&best](const Candidate& c) {
    if (std::isfinite(c.objective) && c.objective < best.objective) best = c;
  };
  for (const auto& s : starts) consider(exp_map_run(jac, q, targets, s, options));

  // Every face of the monotone cone: ties between neighbours given by the mask.
  const std::vector<double> seed = best.delta.empty() ? base : best.delta;
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> block_of(static_cast<std::size_t>(n), 0);
    for (int k = 1; k < n; ++k) {
      const bool tied = (mask >> (k - 1)) & 1u;
      block_of[static_cast<std::size_t>(k)] = block_of[static_cast<std::size_t>(k - 1)] + (tied ? 0 : 1);
    }
    for (const auto* s : {&seed, &base}) {
      if (auto c = tie_pattern_run(jac, q, targets, block_of, *s, options)) consider(*c);
    }
  }
  if (best.delta.empty()) {
    throw ConvergenceError("marginal schedule calibration found no feasible candidate",
                           base, kInf, 0);
  }
  // Ties reached through the exponential map are exact only up to the floor of
  // the increments; snap them.
  for (std::size_t k = 1; k < best.delta.size(); ++k) {
    best.delta[k] = std::max(best.delta[k], best.delta[k - 1]);
  }
  best.objective = anchor_objective(jac, best.delta, q, targets, nullptr);
  return best;
}

}  // namespace

void IncomeQuintiles::validate() const {
  if (means.empty()) throw ValidationError("income quintiles need at least one bracket");
  if (lower.size() != means.size()) {
    throw ValidationError("income quintiles need one lower boundary per mean");
  }
  if (lower[0] != 0.0) throw ValidationError("the first bracket must start at zero income");
  if (!strictly_increasing(means) || !strictly_increasing(lower)) {
    throw ValidationError("income means and boundaries must be strictly increasing");
  }
  for (int j = 0; j < size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (!std::isfinite(means[uj]) || !(means[uj] > lower[uj]) || !(means[uj] <= upper(j))) {
      throw ValidationError("income mean " + std::to_string(j + 1) + " lies outside its bracket");
    }
  }
}

int IncomeQuintiles::bracket_of(double k) const {
  if (k < 0.0) throw DomainError("income must be non-negative");
  return static_cast<int>(bracket_index(lower, k));
}

double IncomeQuintiles::upper(int j) const {
  return j + 1 < size() ? lower[static_cast<std::size_t>(j) + 1] : kInf;
}

IncomeQuintiles IncomeQuintiles::reference() {
  return {{2181.0, 6131.0, 12902.0, 23897.0, 51599.0}, {0.0, 3847.0, 8838.0, 17651.0, 31300.0}};
}

void FairAnchors::validate() const {
  if (months.empty()) throw ValidationError("fair anchors are empty");
  for (const double m : months) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("fair anchors must be positive");
  }
}

std::vector<double> FairAnchors::targets(const IncomeQuintiles& quintiles) const {
  std::vector<double> q(months.size());
  for (std::size_t j = 0; j < months.size(); ++j) q[j] = quintiles.means[j] / months[j];
  return q;
}

FairAnchors FairAnchors::reference() { return {{157.0, 158.1, 158.9, 160.0, 161.1}}; }

void AnchorSet::validate() const {
  quintiles.validate();
  anchors.validate();
  if (anchors.size() != quintiles.size()) {
    throw ValidationError("anchor count does not match the number of income brackets");
  }
}

AnchorSet AnchorSet::reference() {
  return {IncomeQuintiles::reference(), FairAnchors::reference(), "reference"};
}

double alpha_continuous(double k, std::span<const double> alpha_by_group,
                        const IncomeQuintiles& quintiles) {
  if (k < 0.0) throw DomainError("income must be non-negative");
  if (static_cast<int>(alpha_by_group.size()) != quintiles.size()) {
    throw ValidationError("one log-mortality value per quintile is required");
  }
  return interpolate(quintiles.means, alpha_by_group, k);
}

FairBenchmark::FairBenchmark(IncomeQuintiles quintiles, std::vector<std::vector<double>> log_rates,
                             int start_age, AnnuityBasis basis)
    : quintiles_(std::move(quintiles)),
      log_rates_(std::move(log_rates)),
      start_age_(start_age),
      basis_(basis) {
  quintiles_.validate();
  basis_.validate();
  if (static_cast<int>(log_rates_.size()) != quintiles_.size()) {
    throw ValidationError("fair benchmark needs one mortality curve per quintile");
  }
  const auto ages = static_cast<std::size_t>(basis_.limit_age - start_age_);
  if (start_age_ >= basis_.limit_age) throw DomainError("start age must be below the limit age");
  for (const auto& curve : log_rates_) {
    if (curve.size() != ages) {
      throw ValidationError("mortality curve must cover every age up to the limit age");
    }
  }
}

FairBenchmark FairBenchmark::from_model(const MortalityModel& model,
                                        const IncomeQuintiles& quintiles, int age, double kappa,
                                        const AnnuityBasis& basis) {
  if (basis.limit_age != model.grid.x1) {
    throw ValidationError("limit age must equal the upper end of the model age grid");
  }
  std::vector<std::vector<double>> curves;
  for (int j = 0; j < model.groups(); ++j) {
    std::vector<double> curve;
    for (int x = age; x < model.grid.x1; ++x) curve.push_back(model.log_rate(j, x, kappa));
    curves.push_back(std::move(curve));
  }
  return FairBenchmark(quintiles, std::move(curves), age, basis);
}

double reference_log_mortality(int age) {
  static const HermiteSpec spec(Variant::HSM4, {-5.65}, {-0.3}, {6.5}, {1.0});
  return alpha_eval(spec, 0, age, AgeGrid{});
}

FairBenchmark FairBenchmark::anchor_matched(const AnchorSet& anchors, const AnnuityBasis& basis,
                                            int age) {
  anchors.validate();
  basis.validate();
  if (age < 0 || age >= basis.limit_age) throw DomainError("retirement age outside the table");
  std::vector<double> base;
  for (int x = age; x < basis.limit_age; ++x) base.push_back(reference_log_mortality(x));
  auto shifted_cm = [&](double shift) {
    std::vector<double> rates(base.size());
    for (std::size_t s = 0; s < base.size(); ++s) rates[s] = std::exp(base[s] + shift);
    return ndc::fair_cm(survival_from_rates(rates, age, basis), basis);
  };
  std::vector<std::vector<double>> curves;
  for (const double target : anchors.anchors.months) {
    const auto f = [&](double shift) { return shifted_cm(shift) - target; };
    if (f(-12.0) < 0.0 || f(12.0) > 0.0) {
      throw DomainError("anchor " + std::to_string(target) +
                        " months is not attainable by shifting the reference curve");
    }
    const double shift = optim::bisect(f, -12.0, 12.0, 1e-12, 1e-15);
    std::vector<double> curve(base.size());
    for (std::size_t s = 0; s < base.size(); ++s) curve[s] = base[s] + shift;
    curves.push_back(std::move(curve));
  }
  return FairBenchmark(anchors.quintiles, std::move(curves), age, basis);
}

double FairBenchmark::fair_cm(double k) const {
  const std::size_t ages = log_rates_.front().size();
  std::vector<double> column(log_rates_.size());
  std::vector<double> rates(ages);
  for (std::size_t s = 0; s < ages; ++s) {
    for (std::size_t j = 0; j < log_rates_.size(); ++j) column[j] = log_rates_[j][s];
    rates[s] = std::exp(alpha_continuous(k, column, quintiles_));
  }
  return ndc::fair_cm(survival_from_rates(rates, start_age_, basis_), basis_);
}

double FairBenchmark::group_fair_cm(int group) const {
  if (group < 0 || group >= quintiles_.size()) throw DomainError("quintile index out of range");
  std::vector<double> rates;
  for (const double lr : log_rates_[static_cast<std::size_t>(group)]) rates.push_back(std::exp(lr));
  return ndc::fair_cm(survival_from_rates(rates, start_age_, basis_), basis_);
}

double fair_cm_continuous(double k, const FairBenchmark& benchmark) { return benchmark.fair_cm(k); }

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::AvgStep: return "avg-step";
    case RuleKind::AvgLinear: return "avg-linear";
    case RuleKind::MarginalStep: return "marginal-step";
    case RuleKind::MarginalLinear: return "marginal-linear";
  }
  return "unknown";
}

RuleKind rule_kind_from_string(std::string_view name) {
  for (const RuleKind k : {RuleKind::AvgStep, RuleKind::AvgLinear, RuleKind::MarginalStep,
                           RuleKind::MarginalLinear}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown rule kind '" + std::string(name) + "'");
}

void RuleSchedule::validate() const {
  const std::size_t n = knots.size();
  if (n == 0 || values.size() != n) throw ValidationError("schedule needs one value per knot");
  if (!strictly_increasing(knots)) throw ValidationError("schedule knots must be strictly increasing");
  for (const double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("schedule values must be positive");
  }
  const bool step = kind == RuleKind::AvgStep || kind == RuleKind::MarginalStep;
  if (step && knots[0] != 0.0) throw ValidationError("bracket schedules start at zero income");
  if (!step && !(knots[0] > 0.0)) throw ValidationError("anchor knots must be positive");
  const bool marginal = kind == RuleKind::MarginalStep || kind == RuleKind::MarginalLinear;
  if (!marginal) {
    if (!cumulative.empty()) throw ValidationError("average rules carry no cumulative benefits");
    return;
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (values[k] < values[k - 1]) throw ValidationError("marginal counting months must be weakly increasing");
  }
  if (cumulative.size() != n) throw ValidationError("schedule needs one cumulative benefit per knot");
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
  if (kind == RuleKind::MarginalStep) {
    if (cumulative[0] != 0.0) throw ValidationError("cumulative benefit at zero income must be zero");
    for (std::size_t k = 1; k < n; ++k) {
      if (!close(cumulative[k], cumulative[k - 1] + (knots[k] - knots[k - 1]) / values[k - 1])) {
        throw ValidationError("cumulative benefits inconsistent with bracket widths");
      }
    }
  } else {
    if (!close(cumulative[0], knots[0] / values[0])) {
      throw ValidationError("cumulative benefit at the first anchor is inconsistent");
    }
    for (std::size_t k = 1; k < n; ++k) {
      if (!close(cumulative[k], cumulative[k - 1] + segment_integral(values[k - 1], values[k],
                                                                     knots[k - 1], knots[k]))) {
        throw ValidationError("cumulative benefits inconsistent with the knot integrals");
      }
    }
  }
}

double method1_avg(double k, const FairAnchors& anchors, const IncomeQuintiles& quintiles) {
  return anchors.months[static_cast<std::size_t>(quintiles.bracket_of(k))];
}

double method2_avg(double k, const FairAnchors& anchors, const IncomeQuintiles& quintiles) {
  if (k < 0.0) throw DomainError("income must be non-negative");
  return interpolate(quintiles.means, anchors.months, k);
}

RuleSchedule method1_schedule(const AnchorSet& anchors) {
  anchors.validate();
  return {RuleKind::AvgStep, anchors.quintiles.lower, anchors.anchors.months, {}, 0.0, anchors.source};
}

RuleSchedule method2_schedule(const AnchorSet& anchors) {
  anchors.validate();
  return {RuleKind::AvgLinear, anchors.quintiles.means, anchors.anchors.months, {}, 0.0, anchors.source};
}

double implied_marginal(double m, double m_slope, double k) {
  const double denom = m - k * m_slope;
  if (!(denom > 0.0)) throw DomainError("benefit does not increase with income here");
  return m * m / denom;
}

std::optional<double> implied_marginal_fd(const RuleSchedule& schedule, double k, double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  const double increment = normalized_benefit(k + h, schedule) - normalized_benefit(k, schedule);
  if (!(increment > 0.0)) return std::nullopt;
  return h / increment;
}

ExactSchedule method3_exact(const FairAnchors& anchors, const IncomeQuintiles& quintiles) {
  AnchorSet set{quintiles, anchors, ""};
  set.validate();
  const std::vector<double> q = anchors.targets(quintiles);
  ExactSchedule out;
  double c = 0.0;
  for (int j = 0; j < quintiles.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (!(q[uj] > c)) {
      throw InfeasibleError("bracket " + std::to_string(j + 1) +
                                ": anchor benefit does not exceed the benefit accrued below the bracket",
                            j + 1, "lower");
    }
    const double delta = (quintiles.means[uj] - quintiles.lower[uj]) / (q[uj] - c);
    out.values.push_back(delta);
    out.cumulative.push_back(c);
    if (j + 1 < quintiles.size()) c += (quintiles.lower[uj + 1] - quintiles.lower[uj]) / delta;
  }
  return out;
}

bool method3_monotone_feasible(const FairAnchors& anchors, const IncomeQuintiles& quintiles) {
  const std::vector<double> q = anchors.targets(quintiles);
  double c = 0.0;
  double prev = 0.0;
  for (int j = 0; j < quintiles.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double partial = quintiles.means[uj] - quintiles.lower[uj];
    if (!(q[uj] > c)) return false;
    if (j > 0 && q[uj] > c + partial / prev) return false;
    prev = partial / (q[uj] - c);
    if (j + 1 < quintiles.size()) c += (quintiles.lower[uj + 1] - quintiles.lower[uj]) / prev;
  }
  return true;
}

RuleSchedule method3_calibrate(const AnchorSet& anchors) {
  anchors.validate();
  std::vector<double> start;
  try {
    start = method3_exact(anchors.anchors, anchors.quintiles).values;
  } catch (const InfeasibleError&) {
    start = anchors.anchors.months;
  }
  const Candidate best = calibrate_marginal(method3_jacobian, anchors, start);
  RuleSchedule s{RuleKind::MarginalStep, anchors.quintiles.lower, best.delta, {}, best.objective,
                 anchors.source};
  double c = 0.0;
  for (std::size_t j = 0; j < s.values.size(); ++j) {
    s.cumulative.push_back(c);
    if (j + 1 < s.values.size()) c += (s.knots[j + 1] - s.knots[j]) / s.values[j];
  }
  return s;
}

double method3_benefit(double k, const RuleSchedule& schedule) {
  if (schedule.kind != RuleKind::MarginalStep) throw ValidationError("schedule is not a marginal-step rule");
  if (k < 0.0) throw DomainError("income must be non-negative");
  const std::size_t j = bracket_index(schedule.knots, k);
  return schedule.cumulative[j] + (k - schedule.knots[j]) / schedule.values[j];
}

double segment_integral(double a, double b, double k_lo, double k_hi) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("marginal counting months must be positive");
  const double width = k_hi - k_lo;
  if (!(width > 0.0)) throw DomainError("segment must have positive width");
  if (a == b) return width / a;
  return width * std::log1p((b - a) / a) / (b - a);
}

double partial_integral(double a, double b, double k_lo, double k_hi, double k) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("marginal counting months must be positive");
  const double width = k_hi - k_lo;
  if (!(width > 0.0)) throw DomainError("segment must have positive width");
  if (k < k_lo || k > k_hi) throw DomainError("income outside the segment");
  if (a == b) return (k - k_lo) / a;
  return width / (b - a) * std::log1p((b - a) * (k - k_lo) / width / a);
}

ExactSchedule method4_exact(const FairAnchors& anchors, const IncomeQuintiles& quintiles) {
  AnchorSet set{quintiles, anchors, ""};
  set.validate();
  const std::vector<double> q = anchors.targets(quintiles);
  ExactSchedule out;
  out.values.push_back(quintiles.means[0] / q[0]);
  out.cumulative.push_back(quintiles.means[0] / out.values[0]);
  for (int j = 0; j + 1 < quintiles.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double a = out.values[uj];
    const double target = q[uj + 1] - q[uj];
    const double k_lo = quintiles.means[uj], k_hi = quintiles.means[uj + 1];
    const std::string where = "anchor " + std::to_string(j + 2);
    if (!(target > 0.0)) {
      throw InfeasibleError(where + ": anchor benefits must increase", j + 2, "lower");
    }
    const auto residual = [&](double b) { return segment_integral(a, b, k_lo, k_hi) - target; };
    const double lo = a * 1e-3, hi = a * 1e3;
    if (residual(lo) < 0.0) {
      throw InfeasibleError(where + ": benefit increment too large for any positive knot", j + 2,
                            "upper");
    }
    if (residual(hi) > 0.0) {
      throw InfeasibleError(where + ": benefit increment too small for any positive knot", j + 2,
                            "lower");
    }
    const double b = optim::bisect(residual, lo, hi, 1e-10 * std::max(1.0, target), 0.0, 2000);
    out.values.push_back(b);
    out.cumulative.push_back(out.cumulative.back() + segment_integral(a, b, k_lo, k_hi));
  }
  return out;
}

bool method4_monotone_feasible(const FairAnchors& anchors, const IncomeQuintiles& quintiles) {
  const std::vector<double> q = anchors.targets(quintiles);
  double a = quintiles.means[0] / q[0];
  for (int j = 0; j + 1 < quintiles.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double width = quintiles.means[uj + 1] - quintiles.means[uj];
    const double target = q[uj + 1] - q[uj];
    if (!(target > 0.0) || target > width / a) return false;
    const auto residual = [&](double b) { return segment_integral(a, b, quintiles.means[uj], quintiles.means[uj + 1]) - target; };
    a = optim::bisect(residual, a, a * 1e3, 1e-12 * std::max(1.0, target), 0.0, 2000);
  }
  return true;
}

RuleSchedule method4_calibrate(const AnchorSet& anchors) {
  anchors.validate();
  std::vector<double> start;
  try {
    start = method4_exact(anchors.anchors, anchors.quintiles).values;
  } catch (const InfeasibleError&) {
    start = anchors.anchors.months;
  }
  const Candidate best = calibrate_marginal(method4_jacobian, anchors, start);
  RuleSchedule s{RuleKind::MarginalLinear, anchors.quintiles.means, best.delta, {}, best.objective,
                 anchors.source};
  s.cumulative.push_back(s.knots[0] / s.values[0]);
  for (std::size_t j = 1; j < s.values.size(); ++j) {
    s.cumulative.push_back(s.cumulative.back() +
                           segment_integral(s.values[j - 1], s.values[j], s.knots[j - 1], s.knots[j]));
  }
  return s;
}

double method4_benefit(double k, const RuleSchedule& schedule) {
  if (schedule.kind != RuleKind::MarginalLinear) throw ValidationError("schedule is not a marginal-linear rule");
  if (k < 0.0) throw DomainError("income must be non-negative");
  const auto& x = schedule.knots;
  const auto& d = schedule.values;
  if (k <= x.front()) return k / d.front();
  if (k > x.back()) return schedule.cumulative.back() + (k - x.back()) / d.back();
  const auto j = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), k) - x.begin()) - 1;
  return schedule.cumulative[j] + partial_integral(d[j], d[j + 1], x[j], x[j + 1], k);
}

double method3_objective(std::span<const double> delta, const AnchorSet& anchors) {
  check_delta(delta, anchors.quintiles.size());
  return anchor_objective(method3_jacobian, delta, anchors.quintiles,
                          anchors.anchors.targets(anchors.quintiles), nullptr);
}

double method4_objective(std::span<const double> delta, const AnchorSet& anchors) {
  check_delta(delta, anchors.quintiles.size());
  return anchor_objective(method4_jacobian, delta, anchors.quintiles,
                          anchors.anchors.targets(anchors.quintiles), nullptr);
}

std::vector<double> method3_anchor_benefits(std::span<const double> delta,
                                            const IncomeQuintiles& quintiles) {
  check_delta(delta, quintiles.size());
  return method3_jacobian(delta, quintiles).y;
}

std::vector<double> method4_anchor_benefits(std::span<const double> delta,
                                            const IncomeQuintiles& quintiles) {
  check_delta(delta, quintiles.size());
  return method4_jacobian(delta, quintiles).y;
}

double normalized_benefit(double k, const RuleSchedule& schedule) {
  if (k < 0.0) throw DomainError("income must be non-negative");
  switch (schedule.kind) {
    case RuleKind::AvgStep:
    case RuleKind::AvgLinear: return k / average_cm(k, schedule);
    case RuleKind::MarginalStep: return method3_benefit(k, schedule);
    case RuleKind::MarginalLinear: return method4_benefit(k, schedule);
  }
  return 0.0;
}

double benefit(double k, const RuleSchedule& schedule, double phi) {
  if (!(phi > 0.0)) throw ValidationError("account scale must be positive");
  return phi * normalized_benefit(k, schedule);
}

double average_cm(double k, const RuleSchedule& schedule) {
  if (k < 0.0) throw DomainError("income must be non-negative");
  switch (schedule.kind) {
    case RuleKind::AvgStep: return schedule.values[bracket_index(schedule.knots, k)];
    case RuleKind::AvgLinear: return interpolate(schedule.knots, schedule.values, k);
    case RuleKind::MarginalStep:
    case RuleKind::MarginalLinear:
      if (k == 0.0) return schedule.values.front();
      return k / normalized_benefit(k, schedule);
  }
  return 0.0;
}

double marginal_cm(double k, const RuleSchedule& schedule) {
  if (k < 0.0) throw DomainError("income must be non-negative");
  const auto& x = schedule.knots;
  const auto& v = schedule.values;
  switch (schedule.kind) {
    case RuleKind::AvgStep:
    case RuleKind::MarginalStep: return v[bracket_index_right(x, k)];
    case RuleKind::AvgLinear: {
      if (k < x.front() || k >= x.back()) return k < x.front() ? v.front() : v.back();
      const auto j = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), k) - x.begin()) - 1;
      const double slope = (v[j + 1] - v[j]) / (x[j + 1] - x[j]);
      return implied_marginal(interpolate(x, v, k), slope, k);
    }
    case RuleKind::MarginalLinear: return interpolate(x, v, k);
  }
  return 0.0;
}

double residual_subsidy(double k, const RuleSchedule& schedule, const FairBenchmark& benchmark) {
  const double m = average_cm(k, schedule);
  if (!(m > 0.0)) throw DomainError("rule counting month must be positive");
  return benchmark.fair_cm(k) / m - 1.0;
}

std::vector<double> monotone_projection(std::span<const double> values) {
  // Pool adjacent violators.
  std::vector<double> level;
  std::vector<double> weight;
  for (const double v : values) {
    level.push_back(v);
    weight.push_back(1.0);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double w = weight[weight.size() - 2] + weight.back();
      const double l = (level[level.size() - 2] * weight[weight.size() - 2] + level.back() * weight.back()) / w;
      level.pop_back();
      weight.pop_back();
      level.back() = l;
      weight.back() = w;
    }
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < level.size(); ++b) {
    out.insert(out.end(), static_cast<std::size_t>(weight[b]), level[b]);
  }
  return out;
}

}  // namespace ndc
