// Command-line driver: estimation, valuation, projection and rule calibration.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ndc/annuity.hpp"
#include "ndc/errors.hpp"
#include "ndc/io.hpp"
#include "ndc/model.hpp"
#include "ndc/national_lc.hpp"
#include "ndc/projection.hpp"
#include "ndc/rules.hpp"
#include "ndc/subgroup_fit.hpp"

namespace fs = std::filesystem;
using ndc::io::format_double;
using ndc::io::Json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> r;
  std::string out;
  std::string anchors;
};

struct Inputs {
  std::string national;
  std::string subgroup;
  std::string lc;
  std::string spec;
  std::string schedules;
  std::string truth;
  int ref_year = 0;
  std::vector<std::string> variants;
  std::vector<int> ages;
  int horizon = 0;
  int paths = 0;
  std::optional<double> sigma;
  double from = 500.0, to = 120000.0, step = 100.0;
  double exposure_scale = 1e8;
};

ndc::io::RunConfig load_config(const Globals& g) {
  ndc::io::RunConfig c;
  if (!g.config_path.empty()) c = ndc::io::config_from_json(ndc::io::read_json(g.config_path));
  if (g.seed) c.seed = *g.seed;
  if (g.r) c.r = *g.r;
  if (!g.out.empty()) c.output_dir = g.out;
  if (!g.anchors.empty()) c.anchors_path = g.anchors;
  c.validate();
  return c;
}

std::string pick(const std::string& flag, const std::string& fallback, const char* what) {
  const std::string v = flag.empty() ? fallback : flag;
  if (v.empty()) throw ndc::ValidationError(std::string("no ") + what + " given");
  return v;
}

// Configured path, else the file of that name in the output directory.
std::string or_default(const std::string& configured, const ndc::io::RunConfig& c, const char* name) {
  return configured.empty() ? (fs::path(c.output_dir) / name).string() : configured;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ndc::ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

ndc::AnnuityBasis basis_of(const ndc::io::RunConfig& c) {
  ndc::AnnuityBasis b{c.r, c.grid.x1};
  b.validate();
  return b;
}

ndc::MortalityModel load_model(const Inputs& in, const ndc::io::RunConfig& c) {
  const fs::path dir = c.output_dir;
  ndc::LCParams lc = ndc::io::lc_from_json(ndc::io::read_json(pick(in.lc, (dir / "lc.json").string(), "LC parameters")));
  ndc::HermiteSpec spec =
      ndc::io::spec_from_json(ndc::io::read_json(pick(in.spec, (dir / "spec_HSM-III.json").string(), "Hermite specification")));
  return {std::move(lc), std::move(spec), c.grid};
}

ndc::AnchorSet load_anchors(const ndc::io::RunConfig& c) {
  if (c.anchors_path.empty()) return ndc::AnchorSet::reference();
  return ndc::io::anchors_from_json(ndc::io::read_json(c.anchors_path));
}

// --- subcommands ---------------------------------------------------------

void cmd_synth(const Inputs& in, const ndc::io::RunConfig& c) {
  ndc::io::SyntheticTruth truth = in.truth.empty()
                                      ? ndc::io::reference_truth(c.seed, in.exposure_scale)
                                      : ndc::io::truth_from_json(ndc::io::read_json(in.truth));
  if (!in.truth.empty()) truth.seed = c.seed;
  const ndc::io::SyntheticData data = ndc::io::generate_synthetic(truth);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "national.csv", std::ios::binary);
    ndc::io::write_national_csv(out, data.national);
  }
  {
    std::ofstream out(dir / "subgroup.csv", std::ios::binary);
    ndc::io::write_subgroup_csv(out, data.subgroup);
  }
  ndc::io::write_json(dir / "truth.json", ndc::io::to_json(truth));
}

void cmd_fit_national(const Inputs& in, const ndc::io::RunConfig& c) {
  const ndc::NationalPanel panel = ndc::io::read_national_csv(pick(in.national, or_default(c.national_path, c, "national.csv"), "national data"));
  const int ref = in.ref_year != 0 ? in.ref_year : c.ref_year;
  const ndc::LCFit fit = ndc::fit_lc_poisson(panel, ref);
  const fs::path dir = c.output_dir;
  ndc::io::write_json(dir / "lc.json", ndc::io::to_json(fit.params));
  ndc::io::write_json(dir / "national_report.json",
                      {{"log_likelihood", fit.report.log_likelihood},
                       {"deviance", fit.report.deviance},
                       {"iterations", fit.report.iterations},
                       {"gradient_norm", fit.report.gradient_norm},
                       {"cells", panel.age_count() * panel.year_count()}});
}

void cmd_fit_subgroup(const Inputs& in, const ndc::io::RunConfig& c) {
  const fs::path dir = c.output_dir;
  const ndc::SubgroupPanel panel =
      ndc::io::read_subgroup_csv(pick(in.subgroup, or_default(c.subgroup_path, c, "subgroup.csv"), "subgroup data"), c.groups, c.wave_intervals);
  const ndc::LCParams lc = ndc::io::lc_from_json(ndc::io::read_json(pick(in.lc, (dir / "lc.json").string(), "LC parameters")));
  const std::vector<ndc::PooledCell> cells = ndc::build_pooled(panel, lc);

  std::vector<std::string> names = in.variants;
  if (names.empty()) names = {"HSM-I", "HSM-II", "HSM-III", "HSM-IV", "Gompertz", "Gompertz-constrained"};
  std::ostringstream table;
  table << "variant,parameters,observations,log_likelihood,aic,bic\n";
  Json report = Json::object();
  for (const auto& name : names) {
    const ndc::Variant v = ndc::variant_from_string(name);
    double ll = 0.0;
    std::optional<ndc::HermiteSpec> spec;
    int cells_used = 0;
    for (const auto& cell : cells) cells_used += cell.exposure > 0.0 ? 1 : 0;
    if (v == ndc::Variant::GompertzFree || v == ndc::Variant::GompertzConstrained) {
      ndc::GompertzFit g = ndc::gompertz_fit(cells, c.groups, c.grid, v == ndc::Variant::GompertzConstrained);
      ll = ndc::pooled_log_likelihood(g.spec, cells, c.grid);
      report[name] = {{"q", g.q}, {"iterations", g.iterations}, {"intercept", g.intercept}, {"slope", g.slope}};
      spec = std::move(g.spec);
    } else {
      ndc::HsmFit h = ndc::fit_hsm(cells, v, ndc::ShapeConstraints{}, c.grid, c.groups);
      ll = h.report.log_likelihood;
      report[name] = {{"q", h.report.q},
                      {"iterations", h.report.iterations},
                      {"best_start", h.report.best_start},
                      {"gradient_norm", h.report.gradient_norm},
                      {"start_q", h.report.start_q},
                      {"cells_dropped", h.report.cells_dropped}};
      spec = std::move(h.spec);
    }
    const ndc::ModelScores s = ndc::model_scores(ll, ndc::free_parameter_count(v, c.groups), cells_used);
    table << name << ',' << s.parameters << ',' << s.observations << ',' << format_double(s.log_likelihood) << ','
          << format_double(s.aic) << ',' << format_double(s.bic) << '\n';
    ndc::io::write_json(dir / ("spec_" + name + ".json"), ndc::io::to_json(*spec));
  }
  write_text(dir / "model_scores.csv", table.str());
  ndc::io::write_json(dir / "subgroup_report.json", report);
}

std::string pct(double rate) { return ndc::io::format_fixed(100.0 * rate, 1); }

void cmd_fair_cm(const Inputs& in, const ndc::io::RunConfig& c) {
  const ndc::MortalityModel model = load_model(in, c);
  const ndc::AnnuityBasis basis = basis_of(c);
  const std::vector<int> ages = in.ages.empty() ? c.retirement_ages : in.ages;
  const double kappa = model.lc.kappa_at(c.ref_year);
  std::ostringstream csv;
  csv << "quintile,age,fair_cm,official_cm,subsidy_pct\n";
  for (int j = 0; j < model.groups(); ++j) {
    for (const int age : ages) {
      const double fair = ndc::model_fair_cm(model, j, age, kappa, basis);
      const int official = ndc::official_cm(age);
      csv << (j + 1) << ',' << age << ',' << ndc::io::format_fixed(fair, 1) << ',' << official << ','
          << pct(ndc::subsidy(fair, official)) << '\n';
    }
  }
  write_text(fs::path(c.output_dir) / "fair_cm.csv", csv.str());
}

void cmd_project(const Inputs& in, const ndc::io::RunConfig& c) {
  const ndc::MortalityModel model = load_model(in, c);
  const ndc::AnnuityBasis basis = basis_of(c);
  const int horizon_year = in.horizon != 0 ? in.horizon : c.horizon;
  const int n_paths = in.paths != 0 ? in.paths : c.n_paths;
  const std::vector<int> ages = in.ages.empty() ? c.retirement_ages : in.ages;

  ndc::RwdParams rwd = ndc::fit_rwd(model.lc.kappa);
  if (in.sigma) rwd.sigma = *in.sigma;
  const int base_year = c.ref_year;
  const double base_kappa = model.lc.kappa_at(base_year);
  const int steps = horizon_year - base_year;

  std::optional<ndc::KappaPaths> paths;
  if (steps >= 1) paths = ndc::simulate_kappa(rwd, base_kappa, base_year, steps, n_paths, c.seed);

  std::ostringstream csv;
  csv << "year,quintile,age,median_fair_cm,official_cm,median_subsidy\n";
  for (int j = 0; j < model.groups(); ++j) {
    for (const int age : ages) {
      const int official = ndc::official_cm(age);
      const double now = ndc::model_fair_cm(model, j, age, base_kappa, basis);
      csv << base_year << ',' << (j + 1) << ',' << age << ',' << format_double(now) << ',' << official << ','
          << format_double(ndc::subsidy(now, official)) << '\n';
      if (!paths) continue;
      const auto fair = [&](double kappa, int) { return ndc::model_fair_cm(model, j, age, kappa, basis); };
      const std::vector<double> med = ndc::median_projection(fair, *paths);
      for (int s = 0; s < steps; ++s) {
        const double m = med[static_cast<std::size_t>(s)];
        csv << paths->year(s) << ',' << (j + 1) << ',' << age << ',' << format_double(m) << ',' << official << ','
            << format_double(ndc::subsidy(m, official)) << '\n';
      }
    }
  }
  const fs::path dir = c.output_dir;
  write_text(dir / "projection.csv", csv.str());
  ndc::io::write_json(dir / "rwd.json", {{"drift", rwd.drift},
                                         {"sigma", rwd.sigma},
                                         {"base_year", base_year},
                                         {"n_paths", n_paths},
                                         {"seed", c.seed}});
}

Json exact_record(const std::function<ndc::ExactSchedule()>& solve) {
  try {
    const ndc::ExactSchedule e = solve();
    return {{"feasible", true}, {"values", e.values}, {"cumulative", e.cumulative}};
  } catch (const ndc::InfeasibleError& err) {
    return {{"feasible", false}, {"message", err.what()}, {"step", err.step()}, {"side", err.side()}};
  }
}

void cmd_calibrate_rules(const Inputs&, const ndc::io::RunConfig& c) {
  const ndc::AnchorSet anchors = load_anchors(c);
  const fs::path dir = c.output_dir;
  const std::vector<ndc::RuleSchedule> schedules{ndc::method1_schedule(anchors), ndc::method2_schedule(anchors),
                                                 ndc::method3_calibrate(anchors),
                                                 ndc::method4_calibrate(anchors)};
  for (std::size_t m = 0; m < schedules.size(); ++m) {
    ndc::io::write_json(dir / ("method" + std::to_string(m + 1) + ".json"), ndc::io::to_json(schedules[m]));
  }
  Json diag = {
      {"anchors", ndc::io::to_json(anchors)},
      {"targets", anchors.anchors.targets(anchors.quintiles)},
      {"method3_exact", exact_record([&] { return ndc::method3_exact(anchors.anchors, anchors.quintiles); })},
      {"method4_exact", exact_record([&] { return ndc::method4_exact(anchors.anchors, anchors.quintiles); })},
      {"method3_exact_monotone", ndc::method3_monotone_feasible(anchors.anchors, anchors.quintiles)},
      {"method4_exact_monotone", ndc::method4_monotone_feasible(anchors.anchors, anchors.quintiles)},
      {"method3_objective", schedules[2].objective},
      {"method4_objective", schedules[3].objective},
      {"method3_anchor_benefits", ndc::method3_anchor_benefits(schedules[2].values, anchors.quintiles)},
      {"method4_anchor_benefits", ndc::method4_anchor_benefits(schedules[3].values, anchors.quintiles)}};
  ndc::io::write_json(dir / "diagnostics.json", diag);
}

void cmd_evaluate_rules(const Inputs& in, const ndc::io::RunConfig& c) {
  const ndc::AnchorSet anchors = load_anchors(c);
  const ndc::AnnuityBasis basis = basis_of(c);
  std::vector<ndc::RuleSchedule> schedules;
  if (!in.schedules.empty()) {
    for (int m = 1; m <= 4; ++m) {
      schedules.push_back(ndc::io::schedule_from_json(
          ndc::io::read_json(fs::path(in.schedules) / ("method" + std::to_string(m) + ".json"))));
    }
  } else {
    schedules = {ndc::method1_schedule(anchors), ndc::method2_schedule(anchors), ndc::method3_calibrate(anchors),
                 ndc::method4_calibrate(anchors)};
  }
  const ndc::FairBenchmark benchmark =
      (!in.lc.empty() && !in.spec.empty())
          ? ndc::FairBenchmark::from_model(load_model(in, c), anchors.quintiles, 60,
                                           0.0, basis)
          : ndc::FairBenchmark::anchor_matched(anchors, basis, 60);
  if (!(in.step > 0.0) || in.to < in.from || in.from < 0.0) throw ndc::ValidationError("invalid income grid");
  const auto points = static_cast<long>(std::floor((in.to - in.from) / in.step + 1e-9)) + 1;
  std::vector<double> fair(static_cast<std::size_t>(points));
  for (long i = 0; i < points; ++i) fair[static_cast<std::size_t>(i)] = benchmark.fair_cm(in.from + in.step * i);

  std::ostringstream csv;
  csv << "method,income,benefit,benefit_per_income,average_cm,marginal_cm,marginal_cm_fd,fair_cm,subsidy\n";
  for (std::size_t m = 0; m < schedules.size(); ++m) {
    for (long i = 0; i < points; ++i) {
      const double k = in.from + in.step * i;
      const auto& s = schedules[m];
      const double b = ndc::benefit(k, s, c.phi);
      const double avg = ndc::average_cm(k, s);
      const std::optional<double> fd = ndc::implied_marginal_fd(s, k, in.step);
      const double f = fair[static_cast<std::size_t>(i)];
      csv << (m + 1) << ',' << format_double(k) << ',' << format_double(b) << ','
          << (k > 0.0 ? format_double(b / k) : std::string("0")) << ',' << format_double(avg) << ','
          << format_double(ndc::marginal_cm(k, s)) << ',' << (fd ? format_double(*fd) : std::string()) << ','
          << format_double(f) << ',' << format_double(f / avg - 1.0) << '\n';
    }
  }
  write_text(fs::path(c.output_dir) / "rules_grid.csv", csv.str());
}

void emit_error(const std::string& kind, const std::string& message, Json extra = Json::object()) {
  Json record = {{"error", kind}, {"message", message}};
  record.update(extra);
  std::cerr << record.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Income-differentiated annuitization toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Inputs in;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Seed for every random stage");
  app.add_option("--r", g.r, "Annual discount rate");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--anchors", g.anchors, "Income quintiles and fair anchors (JSON)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and its truth");
  synth->add_option("--truth", in.truth, "Truth JSON (defaults to the built-in reference truth)");
  synth->add_option("--exposure-scale", in.exposure_scale, "Exposure per cell for the reference truth");

  auto* fit_nat = app.add_subcommand("fit-national", "Fit the national Lee-Carter model");
  fit_nat->add_option("--national", in.national, "National CSV");
  fit_nat->add_option("--ref-year", in.ref_year, "Reference year with kappa = 0");

  auto* fit_sub = app.add_subcommand("fit-subgroup", "Fit grouped Hermite baselines");
  fit_sub->add_option("--subgroup", in.subgroup, "Subgroup CSV");
  fit_sub->add_option("--lc", in.lc, "LC parameters JSON");
  fit_sub->add_option("--variants", in.variants, "Variants to fit");

  auto* fair = app.add_subcommand("fair-cm", "Fair and official counting months by quintile and age");
  auto* project = app.add_subcommand("project", "Median projections of fair counting months");
  for (auto* sub : {fair, project}) {
    sub->add_option("--lc", in.lc, "LC parameters JSON");
    sub->add_option("--spec", in.spec, "Hermite specification JSON");
    sub->add_option("--ages", in.ages, "Retirement ages");
  }
  project->add_option("--horizon", in.horizon, "Last projected year");
  project->add_option("--paths", in.paths, "Simulation paths");
  project->add_option("--sigma", in.sigma, "Override the random-walk volatility");

  auto* calibrate = app.add_subcommand("calibrate-rules", "Calibrate the four annuitization rules");
  auto* evaluate = app.add_subcommand("evaluate-rules", "Evaluate rules on a dense income grid");
  evaluate->add_option("--schedules", in.schedules, "Directory holding method1..4.json");
  evaluate->add_option("--lc", in.lc, "LC parameters JSON for a model-based benchmark");
  evaluate->add_option("--spec", in.spec, "Hermite specification JSON for a model-based benchmark");
  evaluate->add_option("--from", in.from, "First income");
  evaluate->add_option("--to", in.to, "Last income");
  evaluate->add_option("--step", in.step, "Income step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    const ndc::io::RunConfig config = load_config(g);
    if (*synth) cmd_synth(in, config);
    else if (*fit_nat) cmd_fit_national(in, config);
    else if (*fit_sub) cmd_fit_subgroup(in, config);
    else if (*fair) cmd_fair_cm(in, config);
    else if (*project) cmd_project(in, config);
    else if (*calibrate) cmd_calibrate_rules(in, config);
    else if (*evaluate) cmd_evaluate_rules(in, config);
  } catch (const ndc::ParseError& e) {
    emit_error("parse", e.what(), {{"row", e.row()}});
    return 2;
  } catch (const ndc::InfeasibleError& e) {
    emit_error("infeasible", e.what(), {{"step", e.step()}, {"side", e.side()}});
    return 2;
  } catch (const ndc::ValidationError& e) {
    emit_error("validation", e.what());
    return 2;
  } catch (const ndc::ConvergenceError& e) {
    emit_error("convergence", e.what(),
               {{"iterations", e.iterations()}, {"gradient_norm", e.gradient_norm()}, {"last_iterate", e.last_iterate()}});
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}
