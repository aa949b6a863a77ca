#include "ndc/national_lc.hpp"

#include <cmath>
#include <numeric>

#include "ndc/errors.hpp"

namespace ndc {

NationalPanel::NationalPanel(int first_age, int ages, int first_year, int years,
                             std::vector<double> deaths, std::vector<double> exposure)
    : first_age_(first_age),
      ages_(ages),
      first_year_(first_year),
      years_(years),
      deaths_(std::move(deaths)),
      exposure_(std::move(exposure)) {
  if (ages < 1 || years < 1) throw ValidationError("national panel needs at least one age and year");
  const auto cells = static_cast<std::size_t>(ages) * static_cast<std::size_t>(years);
  if (deaths_.size() != cells || exposure_.size() != cells) {
    throw ValidationError("national panel is not rectangular");
  }
  for (std::size_t i = 0; i < cells; ++i) {
    const int age = first_age + static_cast<int>(i) / years;
    const int year = first_year + static_cast<int>(i) % years;
    if (!(deaths_[i] >= 0.0) || !std::isfinite(deaths_[i])) {
      throw ValidationError("negative or non-finite deaths at age " + std::to_string(age) +
                            ", year " + std::to_string(year));
    }
    if (!(exposure_[i] > 0.0) || !std::isfinite(exposure_[i])) {
      throw ValidationError("non-positive exposure at age " + std::to_string(age) + ", year " +
                            std::to_string(year));
    }
  }
}

std::size_t NationalPanel::index(int age, int year) const {
  if (age < first_age_ || age > last_age() || year < first_year_ || year > last_year()) {
    throw DomainError("cell (" + std::to_string(age) + ", " + std::to_string(year) +
                      ") outside the national panel");
  }
  return static_cast<std::size_t>(age - first_age_) * static_cast<std::size_t>(years_) +
         static_cast<std::size_t>(year - first_year_);
}

double LCParams::alpha_at(int age) const {
  if (age < first_age || age > last_age()) {
    throw DomainError("age " + std::to_string(age) + " outside the fitted Lee-Carter ages");
  }
  return alpha[static_cast<std::size_t>(age - first_age)];
}

double LCParams::beta_at(int age) const {
  if (age < first_age || age > last_age()) {
    throw DomainError("age " + std::to_string(age) + " outside the fitted Lee-Carter ages");
  }
  return beta[static_cast<std::size_t>(age - first_age)];
}

double LCParams::kappa_at(int year) const {
  if (year < first_year || year > last_year()) {
    throw DomainError("year " + std::to_string(year) + " outside the fitted Lee-Carter years");
  }
  return kappa[static_cast<std::size_t>(year - first_year)];
}

double LCParams::beta_extended(int age) const {
  if (beta.empty()) throw DomainError("empty Lee-Carter parameters");
  if (age < first_age) return beta.front();
  if (age > last_age()) return beta.back();
  return beta[static_cast<std::size_t>(age - first_age)];
}

double fitted_log_m(const LCParams& params, int age, int year) {
  return params.alpha_at(age) + params.beta_at(age) * params.kappa_at(year);
}

LCParams normalize_lc(int first_age, int first_year, std::vector<double> alpha,
                      std::vector<double> beta, std::vector<double> kappa, int ref_year) {
  if (alpha.size() != beta.size() || alpha.empty() || kappa.empty()) {
    throw ValidationError("normalize_lc: inconsistent parameter lengths");
  }
  if (ref_year < first_year || ref_year >= first_year + static_cast<int>(kappa.size())) {
    throw DomainError("reference year " + std::to_string(ref_year) + " outside the fitted years");
  }
  const double total = std::accumulate(beta.begin(), beta.end(), 0.0);
  if (total == 0.0 || !std::isfinite(total)) {
    throw ValidationError("degenerate Lee-Carter factorization: sum of beta is zero");
  }
  if (total != 1.0) {
    for (double& b : beta) b /= total;
    for (double& k : kappa) k *= total;
  }
  const double shift = kappa[static_cast<std::size_t>(ref_year - first_year)];
  if (shift != 0.0) {
    for (std::size_t x = 0; x < alpha.size(); ++x) alpha[x] += beta[x] * shift;
    for (double& k : kappa) k -= shift;
  }
  kappa[static_cast<std::size_t>(ref_year - first_year)] = 0.0;
  return {first_age, first_year, ref_year, std::move(alpha), std::move(beta), std::move(kappa)};
}

namespace {

struct Surface {
  int ages, years;
  std::vector<double> alpha, beta, kappa;
  double log_m(int x, int t) const {
    return alpha[static_cast<std::size_t>(x)] +
           beta[static_cast<std::size_t>(x)] * kappa[static_cast<std::size_t>(t)];
  }
};

double kernel(const NationalPanel& p, const Surface& s) {
  double q = 0.0;
  const auto& d = p.deaths_data();
  const auto& e = p.exposure_data();
  for (int x = 0; x < s.ages; ++x) {
    for (int t = 0; t < s.years; ++t) {
      const auto i = static_cast<std::size_t>(x * s.years + t);
      const double lm = s.log_m(x, t);
      q += d[i] * lm - e[i] * std::exp(lm);
    }
  }
  return q;
}

double log_factorial_total(const NationalPanel& p) {
  double total = 0.0;
  for (double d : p.deaths_data()) total += std::lgamma(d + 1.0);
  return total;
}

// One safeguarded Newton step on a concave 1-D Poisson kernel
//   f(c) = sum_i w_i D_i c - E_i exp(base_i + w_i c).
// Step halving guarantees f does not decrease.
template <class Cells>
double newton_coordinate(double c, const Cells& cells) {
  double f0 = 0.0, g = 0.0, h = 0.0;
  for (const auto& [d, e, base, w] : cells) {
    const double mean = e * std::exp(base + w * c);
    f0 += w * d * c - mean;
    g += w * (d - mean);
    h += w * w * mean;
  }
  if (!(h > 0.0) || g == 0.0) return c;
  double step = g / h;
  for (int k = 0; k < 60; ++k) {
    const double trial = c + step;
    double f1 = 0.0;
    for (const auto& [d, e, base, w] : cells) f1 += w * d * trial - e * std::exp(base + w * trial);
    if (f1 >= f0) return trial;
    step *= 0.5;
  }
  return c;
}

struct CoordCell {
  double d, e, base, w;
};

}  // namespace

double poisson_log_likelihood(const NationalPanel& panel, const LCParams& params) {
  double ll = 0.0;
  for (int age = panel.first_age(); age <= panel.last_age(); ++age) {
    for (int year = panel.first_year(); year <= panel.last_year(); ++year) {
      const double lm = fitted_log_m(params, age, year);
      const double d = panel.deaths(age, year);
      ll += d * (std::log(panel.exposure(age, year)) + lm) -
            panel.exposure(age, year) * std::exp(lm) - std::lgamma(d + 1.0);
    }
  }
  return ll;
}

LCFit fit_lc_poisson(const NationalPanel& panel, int ref_year, const LCFitOptions& options) {
  if (ref_year < panel.first_year() || ref_year > panel.last_year()) {
    throw DomainError("reference year " + std::to_string(ref_year) + " outside the panel years");
  }
  const int X = panel.age_count();
  const int T = panel.year_count();
  if (X < 2) throw ValidationError("Lee-Carter fit needs at least two ages");
  const auto& D = panel.deaths_data();
  const auto& E = panel.exposure_data();
  const auto cell = [T](int x, int t) { return static_cast<std::size_t>(x * T + t); };

  Surface s{X, T, std::vector<double>(static_cast<std::size_t>(X)),
            std::vector<double>(static_cast<std::size_t>(X), 1.0 / X),
            std::vector<double>(static_cast<std::size_t>(T), 0.0)};
  for (int x = 0; x < X; ++x) {
    double dsum = 0.0, esum = 0.0;
    for (int t = 0; t < T; ++t) {
      dsum += D[cell(x, t)];
      esum += E[cell(x, t)];
    }
    s.alpha[static_cast<std::size_t>(x)] = std::log(std::max(dsum, 0.5) / esum);
  }
  for (int t = 0; t < T; ++t) {
    double k = 0.0;
    for (int x = 0; x < X; ++x) {
      const double d = D[cell(x, t)];
      const double e = E[cell(x, t)];
      if (d > 0.0) k += std::log(d / e) - s.alpha[static_cast<std::size_t>(x)];
    }
    s.kappa[static_cast<std::size_t>(t)] = k;
  }

  // log(E) terms and log-factorials are constant in the parameters.
  double constant = -log_factorial_total(panel);
  for (std::size_t i = 0; i < D.size(); ++i) constant += D[i] * std::log(E[i]);

  const auto saturated = [&] {
    double q = 0.0;
    for (std::size_t i = 0; i < D.size(); ++i) {
      if (D[i] > 0.0) q += D[i] * std::log(D[i] / E[i]) - D[i];
    }
    return q;
  }();

  LCFitReport report;
  double q = kernel(panel, s);
  report.log_likelihood_trace.push_back(q + constant);

  std::vector<CoordCell> buf;
  buf.reserve(static_cast<std::size_t>(std::max(X, T)));
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    for (int x = 0; x < X; ++x) {
      buf.clear();
      for (int t = 0; t < T; ++t) {
        buf.push_back({D[cell(x, t)], E[cell(x, t)],
                       s.beta[static_cast<std::size_t>(x)] * s.kappa[static_cast<std::size_t>(t)],
                       1.0});
      }
      s.alpha[static_cast<std::size_t>(x)] = newton_coordinate(s.alpha[static_cast<std::size_t>(x)], buf);
    }
    for (int t = 0; t < T; ++t) {
      buf.clear();
      for (int x = 0; x < X; ++x) {
        buf.push_back({D[cell(x, t)], E[cell(x, t)], s.alpha[static_cast<std::size_t>(x)],
                       s.beta[static_cast<std::size_t>(x)]});
      }
      s.kappa[static_cast<std::size_t>(t)] = newton_coordinate(s.kappa[static_cast<std::size_t>(t)], buf);
    }
    for (int x = 0; x < X; ++x) {
      buf.clear();
      for (int t = 0; t < T; ++t) {
        buf.push_back({D[cell(x, t)], E[cell(x, t)], s.alpha[static_cast<std::size_t>(x)],
                       s.kappa[static_cast<std::size_t>(t)]});
      }
      s.beta[static_cast<std::size_t>(x)] = newton_coordinate(s.beta[static_cast<std::size_t>(x)], buf);
    }
    const double q_new = kernel(panel, s);
    report.log_likelihood_trace.push_back(q_new + constant);
    const double change = q_new - q;
    q = q_new;
    // Relative change measured against the deviance scale (half deviance = saturated - q).
    const double scale = std::max(saturated - q, 1.0);
    if (std::abs(change) <= options.relative_tolerance * scale) {
      converged = true;
      ++it;
      break;
    }
  }

  // Score norm in the raw parametrization.
  double gnorm = 0.0;
  for (int x = 0; x < X; ++x) {
    double ga = 0.0, gb = 0.0;
    for (int t = 0; t < T; ++t) {
      const double r = D[cell(x, t)] - E[cell(x, t)] * std::exp(s.log_m(x, t));
      ga += r;
      gb += r * s.kappa[static_cast<std::size_t>(t)];
    }
    gnorm = std::max({gnorm, std::abs(ga), std::abs(gb)});
  }
  for (int t = 0; t < T; ++t) {
    double gk = 0.0;
    for (int x = 0; x < X; ++x) {
      gk += (D[cell(x, t)] - E[cell(x, t)] * std::exp(s.log_m(x, t))) *
            s.beta[static_cast<std::size_t>(x)];
    }
    gnorm = std::max(gnorm, std::abs(gk));
  }

  if (!converged) {
    std::vector<double> last = s.alpha;
    last.insert(last.end(), s.beta.begin(), s.beta.end());
    last.insert(last.end(), s.kappa.begin(), s.kappa.end());
    throw ConvergenceError("Lee-Carter fit did not converge in " +
                               std::to_string(options.max_iterations) + " sweeps",
                           std::move(last), gnorm, it);
  }

  LCFit fit{normalize_lc(panel.first_age(), panel.first_year(), s.alpha, s.beta, s.kappa, ref_year),
            std::move(report)};
  fit.report.iterations = it;
  fit.report.gradient_norm = gnorm;
  fit.report.log_likelihood = poisson_log_likelihood(panel, fit.params);
  fit.report.deviance = 0.0;
  for (int age = panel.first_age(); age <= panel.last_age(); ++age) {
    for (int year = panel.first_year(); year <= panel.last_year(); ++year) {
      const double d = panel.deaths(age, year);
      const double mean = panel.exposure(age, year) * std::exp(fitted_log_m(fit.params, age, year));
      fit.report.deviance += 2.0 * ((d > 0.0 ? d * std::log(d / mean) : 0.0) - (d - mean));
    }
  }
  return fit;
}

}  // namespace ndc
