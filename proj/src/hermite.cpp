#include "ndc/hermite.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "ndc/errors.hpp"
#include "ndc/optim.hpp"

namespace ndc {

namespace {

constexpr double kSnap = 1e-12;

double value_at(const std::vector<double>& values, int group) {
  return values.size() == 1 ? values.front() : values[static_cast<std::size_t>(group)];
}

}  // namespace

void AgeGrid::validate() const {
  if (!(x0 < x1)) {
    throw DomainError("age grid requires x0 < x1, got [" + std::to_string(x0) + ", " +
                      std::to_string(x1) + "]");
  }
}

double AgeGrid::standardize(double age) const {
  validate();
  return (age - x0) / static_cast<double>(x1 - x0);
}

BasisValues hermite_basis(double xt) {
  if (std::abs(xt) < kSnap) xt = 0.0;
  if (std::abs(xt - 1.0) < kSnap) xt = 1.0;
  if (!(xt >= 0.0 && xt <= 1.0)) {
    throw DomainError("standardized age outside [0, 1]: " + std::to_string(xt));
  }
  const double u = 1.0 - xt;
  return {(1.0 + 2.0 * xt) * u * u, xt * xt * (3.0 - 2.0 * xt), xt * u * u, xt * xt * (xt - 1.0)};
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::HSM1: return "HSM-I";
    case Variant::HSM2: return "HSM-II";
    case Variant::HSM3: return "HSM-III";
    case Variant::HSM4: return "HSM-IV";
    case Variant::GompertzFree: return "Gompertz";
    case Variant::GompertzConstrained: return "Gompertz-constrained";
  }
  return "unknown";
}

Variant variant_from_string(std::string_view name) {
  static const std::map<std::string_view, Variant> names = {
      {"HSM-I", Variant::HSM1},           {"HSM1", Variant::HSM1},
      {"HSM-II", Variant::HSM2},          {"HSM2", Variant::HSM2},
      {"HSM-III", Variant::HSM3},         {"HSM3", Variant::HSM3},
      {"HSM-IV", Variant::HSM4},          {"HSM4", Variant::HSM4},
      {"Gompertz", Variant::GompertzFree}, {"Gompertz-constrained", Variant::GompertzConstrained},
  };
  const auto it = names.find(name);
  if (it == names.end()) throw ValidationError("unknown model variant '" + std::string(name) + "'");
  return it->second;
}

Layout layout_of(Variant variant) {
  switch (variant) {
    case Variant::HSM1: return {true, true, false};
    case Variant::HSM2: return {true, false, false};
    case Variant::HSM3: return {false, true, false};
    case Variant::HSM4: return {false, false, false};
    case Variant::GompertzFree:
    case Variant::GompertzConstrained: return {true, true, true};
  }
  return {false, false, false};
}

int free_parameter_count(Variant variant, int groups) {
  switch (variant) {
    case Variant::HSM1: return 3 * groups + 1;
    case Variant::HSM2: return 2 * groups + 2;
    case Variant::HSM3: return 2 * groups + 2;
    case Variant::HSM4: return groups + 3;
    case Variant::GompertzFree:
    case Variant::GompertzConstrained: return 2 * groups;
  }
  return 0;
}

HermiteSpec::HermiteSpec(Variant variant, std::vector<double> theta, std::vector<double> omega,
                         std::vector<double> mu0, std::vector<double> mu1)
    : variant_(variant),
      theta_(std::move(theta)),
      omega_(std::move(omega)),
      mu0_(std::move(mu0)),
      mu1_(std::move(mu1)) {
  if (theta_.empty()) throw ValidationError("Hermite specification needs at least one group");
  const std::size_t groups = theta_.size();
  const Layout layout = layout_of(variant_);
  const auto expect = [&](const std::vector<double>& v, bool by_group, const char* name) {
    const std::size_t want = by_group ? groups : 1;
    if (v.size() != want) {
      throw ValidationError(std::string(to_string(variant_)) + ": '" + name + "' needs " +
                            std::to_string(want) + " value(s), got " + std::to_string(v.size()));
    }
  };
  expect(omega_, layout.omega_by_group, "omega");
  expect(mu0_, layout.mu0_by_group, "mu0");
  expect(mu1_, layout.mu1_by_group, "mu1");
  if (variant_ == Variant::GompertzFree || variant_ == Variant::GompertzConstrained) {
    for (std::size_t j = 0; j < groups; ++j) {
      const double slope = omega_[j] - theta_[j];
      const double tol = 1e-12 * std::max(1.0, std::abs(slope));
      if (std::abs(mu0_[j] - slope) > tol || std::abs(mu1_[j] - slope) > tol) {
        throw ValidationError("Gompertz specification requires mu0 = mu1 = omega - theta");
      }
    }
  }
}

HermiteSpec HermiteSpec::gompertz(Variant variant, std::vector<double> theta,
                                  std::vector<double> omega) {
  if (variant != Variant::GompertzFree && variant != Variant::GompertzConstrained) {
    throw ValidationError("HermiteSpec::gompertz requires a Gompertz variant");
  }
  if (theta.size() != omega.size()) throw ValidationError("theta and omega sizes differ");
  std::vector<double> slope(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) slope[j] = omega[j] - theta[j];
  return HermiteSpec(variant, std::move(theta), std::move(omega), slope, slope);
}

void HermiteSpec::check_group(int group) const {
  if (group < 0 || group >= groups()) {
    throw DomainError("group index " + std::to_string(group) + " outside [0, " +
                      std::to_string(groups() - 1) + "]");
  }
}

double HermiteSpec::theta(int group) const {
  check_group(group);
  return theta_[static_cast<std::size_t>(group)];
}
double HermiteSpec::omega(int group) const {
  check_group(group);
  return value_at(omega_, group);
}
double HermiteSpec::mu0(int group) const {
  check_group(group);
  return value_at(mu0_, group);
}
double HermiteSpec::mu1(int group) const {
  check_group(group);
  return value_at(mu1_, group);
}

double HermiteSpec::alpha(int group, double xt) const {
  const BasisValues h = hermite_basis(xt);
  return theta(group) * h.h00 + omega(group) * h.h01 + mu0(group) * h.h10 + mu1(group) * h.h11;
}

double alpha_eval(const HermiteSpec& spec, int group, double age, const AgeGrid& grid) {
  if (age < grid.x0 || age > grid.x1) {
    throw DomainError("age " + std::to_string(age) + " outside the grid [" +
                      std::to_string(grid.x0) + ", " + std::to_string(grid.x1) + "]");
  }
  return spec.alpha(group, grid.standardize(age));
}

// ---------------------------------------------------------------------------
// Gompertz fits. Internally each group is alpha = level + slope * xt with
// level the log rate at x0 and slope per unit of standardized age.

namespace {

struct GroupData {
  std::vector<double> xt, deaths, exposure;
};

std::vector<GroupData> split_by_group(std::span<const PooledCell> cells, int groups,
                                      const AgeGrid& grid) {
  std::vector<GroupData> out(static_cast<std::size_t>(groups));
  for (const PooledCell& c : cells) {
    if (c.group < 0 || c.group >= groups) {
      throw DomainError("cell group " + std::to_string(c.group) + " outside [0, " +
                        std::to_string(groups - 1) + "]");
    }
    if (c.exposure <= 0.0) continue;
    GroupData& g = out[static_cast<std::size_t>(c.group)];
    g.xt.push_back(grid.standardize(c.age));
    g.deaths.push_back(c.deaths);
    g.exposure.push_back(c.exposure);
  }
  for (int j = 0; j < groups; ++j) {
    const GroupData& g = out[static_cast<std::size_t>(j)];
    std::vector<double> ages = g.xt;
    std::sort(ages.begin(), ages.end());
    if (std::unique(ages.begin(), ages.end()) - ages.begin() < 2) {
      throw ValidationError("group " + std::to_string(j) +
                            " needs at least two distinct ages with positive exposure");
    }
    if (std::accumulate(g.deaths.begin(), g.deaths.end(), 0.0) <= 0.0) {
      throw ValidationError("group " + std::to_string(j) +
                            " has no deaths: the log-linear MLE is unbounded");
    }
  }
  return out;
}

double group_kernel(const GroupData& g, double level, double slope, double* d_level,
                    double* d_slope) {
  double q = 0.0, gl = 0.0, gs = 0.0;
  for (std::size_t i = 0; i < g.xt.size(); ++i) {
    const double a = level + slope * g.xt[i];
    const double mean = g.exposure[i] * std::exp(a);
    q += g.deaths[i] * a - mean;
    gl += g.deaths[i] - mean;
    gs += (g.deaths[i] - mean) * g.xt[i];
  }
  if (d_level) *d_level = gl;
  if (d_slope) *d_slope = gs;
  return q;
}

// Newton-Raphson with step halving on the concave two-parameter kernel.
std::pair<double, double> fit_group(const GroupData& g, int* iterations) {
  // Deaths-weighted least squares on empirical log rates as a start.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < g.xt.size(); ++i) {
    const double w = g.deaths[i] + 0.5;
    const double y = std::log((g.deaths[i] + 0.5) / g.exposure[i]);
    sw += w;
    sx += w * g.xt[i];
    sy += w * y;
    sxx += w * g.xt[i] * g.xt[i];
    sxy += w * g.xt[i] * y;
  }
  double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
  double level = (sy - slope * sx) / sw;

  double q = group_kernel(g, level, slope, nullptr, nullptr);
  int it = 0;
  for (; it < 500; ++it) {
    double h00 = 0, h01 = 0, h11 = 0, gl = 0, gs = 0;
    for (std::size_t i = 0; i < g.xt.size(); ++i) {
      const double mean = g.exposure[i] * std::exp(level + slope * g.xt[i]);
      gl += g.deaths[i] - mean;
      gs += (g.deaths[i] - mean) * g.xt[i];
      h00 += mean;
      h01 += mean * g.xt[i];
      h11 += mean * g.xt[i] * g.xt[i];
    }
    const double det = h00 * h11 - h01 * h01;
    const double dl = (h11 * gl - h01 * gs) / det;
    const double ds = (h00 * gs - h01 * gl) / det;
    double step = 1.0;
    double q_new = q;
    for (int k = 0; k < 60; ++k) {
      q_new = group_kernel(g, level + step * dl, slope + step * ds, nullptr, nullptr);
      if (q_new >= q) break;
      step *= 0.5;
    }
    if (q_new < q) break;
    level += step * dl;
    slope += step * ds;
    const double change = q_new - q;
    q = q_new;
    if (std::abs(dl) + std::abs(ds) < 1e-13 || change <= 1e-15 * std::abs(q)) {
      ++it;
      break;
    }
  }
  if (iterations) *iterations += it;
  return {level, slope};
}

}  // namespace

GompertzFit gompertz_fit(std::span<const PooledCell> cells, int groups, const AgeGrid& grid,
                         bool constrained) {
  grid.validate();
  if (groups < 1) throw ValidationError("gompertz_fit needs at least one group");
  const std::vector<GroupData> data = split_by_group(cells, groups, grid);
  const auto J = static_cast<std::size_t>(groups);

  std::vector<double> level(J), slope(J);
  int iterations = 0;
  for (std::size_t j = 0; j < J; ++j) {
    std::tie(level[j], slope[j]) = fit_group(data[j], &iterations);
  }

  if (constrained && groups > 1) {
    // level_{j+1} = level_j - exp(u_j), slope_{j+1} = slope_j - exp(w_j).
    double scale = 0.0;
    for (const GroupData& g : data) scale += std::accumulate(g.deaths.begin(), g.deaths.end(), 0.0);
    const Eigen::Index n = 2 * static_cast<Eigen::Index>(J);
    const auto unpack = [J](const Eigen::VectorXd& u, std::vector<double>& lv,
                            std::vector<double>& sl) {
      lv[0] = u[0];
      sl[0] = u[1];
      for (std::size_t j = 1; j < J; ++j) {
        lv[j] = lv[j - 1] - std::exp(u[static_cast<Eigen::Index>(2 * j)]);
        sl[j] = sl[j - 1] - std::exp(u[static_cast<Eigen::Index>(2 * j + 1)]);
      }
    };
    const optim::Objective objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
      std::vector<double> lv(J), sl(J), gl(J), gs(J);
      unpack(u, lv, sl);
      double q = 0.0;
      for (std::size_t j = 0; j < J; ++j) q += group_kernel(data[j], lv[j], sl[j], &gl[j], &gs[j]);
      if (grad) {
        grad->resize(n);
        // d level_j / d u_0 = 1; d level_j / d u_{2k} = -exp(u_{2k}) for 1 <= k <= j.
        double tail_l = 0.0, tail_s = 0.0;
        for (std::size_t k = J; k-- > 1;) {
          tail_l += gl[k];
          tail_s += gs[k];
          (*grad)[static_cast<Eigen::Index>(2 * k)] =
              tail_l * std::exp(u[static_cast<Eigen::Index>(2 * k)]) / scale;
          (*grad)[static_cast<Eigen::Index>(2 * k + 1)] =
              tail_s * std::exp(u[static_cast<Eigen::Index>(2 * k + 1)]) / scale;
        }
        (*grad)[0] = -(tail_l + gl[0]) / scale;
        (*grad)[1] = -(tail_s + gs[0]) / scale;
      }
      return -q / scale;
    };

    // Start from the unconstrained fits projected onto the ordered cone.
    Eigen::VectorXd u0(n);
    u0[0] = level[0];
    u0[1] = slope[0];
    for (std::size_t j = 1; j < J; ++j) {
      u0[static_cast<Eigen::Index>(2 * j)] = std::log(std::max(level[j - 1] - level[j], 1e-3));
      u0[static_cast<Eigen::Index>(2 * j + 1)] = std::log(std::max(slope[j - 1] - slope[j], 1e-3));
    }
    optim::Options opts;
    opts.gradient_tolerance = 1e-11;
    const optim::Result res = optim::minimize_bfgs(objective, u0, opts);
    if (!res.converged) {
      throw ConvergenceError("constrained Gompertz fit did not converge",
                             {res.x.data(), res.x.data() + res.x.size()}, res.gradient_norm,
                             res.iterations);
    }
    unpack(res.x, level, slope);
    iterations += res.iterations;
  }

  const double width = static_cast<double>(grid.x1 - grid.x0);
  GompertzFit fit{HermiteSpec::gompertz(constrained ? Variant::GompertzConstrained
                                                    : Variant::GompertzFree,
                                        level, [&] {
                                          std::vector<double> om(J);
                                          for (std::size_t j = 0; j < J; ++j) om[j] = level[j] + slope[j];
                                          return om;
                                        }()),
                  std::vector<double>(J), std::vector<double>(J), 0.0, iterations};
  for (std::size_t j = 0; j < J; ++j) {
    fit.slope[j] = slope[j] / width;
    fit.intercept[j] = level[j] - fit.slope[j] * grid.x0;
    fit.q += group_kernel(data[j], level[j], slope[j], nullptr, nullptr);
  }
  return fit;
}

CrossoverReport check_non_crossover(const HermiteSpec& spec) {
  CrossoverReport report;
  for (int i = 0; i < spec.groups(); ++i) {
    for (int j = i + 1; j < spec.groups(); ++j) {
      const double lhs = spec.mu0(j) - spec.mu0(i);
      const double rhs = 3.0 * (spec.theta(i) - spec.theta(j));
      const double slack = 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
      if (lhs > rhs + slack) {
        report.ok = false;
        report.violations.emplace_back(i, j);
      }
    }
  }
  return report;
}

}  // namespace ndc
