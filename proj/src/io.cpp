#include "ndc/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "ndc/errors.hpp"
#include "ndc/rng.hpp"

namespace ndc::io {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& field : out) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
  }
  return out;
}

double parse_real(std::string_view field, std::string_view column, long row) {
  if (field.empty()) throw ParseError("empty value in column '" + std::string(column) + "'", row);
  if (field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw ParseError("invalid number '" + std::string(field) + "' in column '" + std::string(column) + "'", row);
  }
  return value;
}

int parse_int(std::string_view field, std::string_view column, long row) {
  if (field.empty()) throw ParseError("empty value in column '" + std::string(column) + "'", row);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("invalid integer '" + std::string(field) + "' in column '" + std::string(column) + "'", row);
  }
  return value;
}

// Reads the header and calls on_row(fields, line_number) for each data line.
template <typename OnRow>
void read_csv(std::istream& in, const std::vector<std::string_view>& header, OnRow on_row) {
  std::string line;
  long row = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (!have_header) {
      if (fields != header) {
        std::string expected;
        for (const auto h : header) expected += (expected.empty() ? "" : ",") + std::string(h);
        throw ParseError("expected header '" + expected + "'", row);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       row);
    }
    on_row(fields, row);
  }
  if (!have_header) throw ParseError("file is empty", 0);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  return out;
}

template <typename T>
T require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing JSON field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("JSON field '") + key + "': " + e.what());
  }
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError(std::string("unknown ") + what + " field '" + key + "'");
  }
}

}  // namespace

std::string format_double(double value) {
  if (!std::isfinite(value)) throw ValidationError("cannot serialize a non-finite number");
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw ValidationError("number formatting failed");
  return {buf, ptr};
}

std::string format_fixed(double value, int decimals) {
  const double rounded = round_half_away(value, decimals);
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, rounded, std::chars_format::fixed, decimals);
  if (ec != std::errc()) throw ValidationError("number formatting failed");
  return {buf, ptr};
}

// --- national ----------------------------------------------------------

NationalPanel parse_national_csv(std::istream& in) {
  std::map<std::pair<int, int>, std::pair<double, double>> cells;
  read_csv(in, {"age", "year", "deaths", "exposure"}, [&](const auto& f, long row) {
    const int age = parse_int(f[0], "age", row);
    const int year = parse_int(f[1], "year", row);
    const double deaths = parse_real(f[2], "deaths", row);
    const double exposure = parse_real(f[3], "exposure", row);
    if (deaths < 0.0) throw ParseError("negative deaths", row);
    if (exposure < 0.0) throw ParseError("negative exposure", row);
    if (exposure == 0.0) throw ParseError("zero exposure", row);
    if (!cells.emplace(std::pair{age, year}, std::pair{deaths, exposure}).second) {
      throw ParseError("duplicate cell (age " + std::to_string(age) + ", year " + std::to_string(year) + ")", row);
    }
  });
  if (cells.empty()) throw ParseError("no data rows", 0);
  int a0 = cells.begin()->first.first, a1 = a0, y0 = cells.begin()->first.second, y1 = y0;
  for (const auto& [key, value] : cells) {
    a0 = std::min(a0, key.first);
    a1 = std::max(a1, key.first);
    y0 = std::min(y0, key.second);
    y1 = std::max(y1, key.second);
  }
  const int ages = a1 - a0 + 1, years = y1 - y0 + 1;
  std::vector<double> deaths, exposure;
  deaths.reserve(static_cast<std::size_t>(ages) * static_cast<std::size_t>(years));
  exposure.reserve(deaths.capacity());
  for (int a = a0; a <= a1; ++a) {
    for (int y = y0; y <= y1; ++y) {
      const auto it = cells.find({a, y});
      if (it == cells.end()) {
        throw ParseError("missing cell (age " + std::to_string(a) + ", year " + std::to_string(y) + ")", 0);
      }
      deaths.push_back(it->second.first);
      exposure.push_back(it->second.second);
    }
  }
  return NationalPanel(a0, ages, y0, years, std::move(deaths), std::move(exposure));
}

NationalPanel read_national_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_national_csv(in);
}

std::vector<NationalRow> national_rows(const NationalPanel& panel) {
  std::vector<NationalRow> rows;
  for (int a = panel.first_age(); a <= panel.last_age(); ++a) {
    for (int y = panel.first_year(); y <= panel.last_year(); ++y) {
      rows.push_back({a, y, panel.deaths(a, y), panel.exposure(a, y)});
    }
  }
  return rows;
}

void write_national_csv(std::ostream& out, const std::vector<NationalRow>& rows) {
  out << "age,year,deaths,exposure\n";
  for (const auto& r : rows) {
    out << r.age << ',' << r.year << ',' << format_double(r.deaths) << ',' << format_double(r.exposure) << '\n';
  }
}

void write_national_csv(const std::filesystem::path& path, const NationalPanel& panel) {
  auto out = open_out(path);
  write_national_csv(out, national_rows(panel));
}

// --- subgroup ----------------------------------------------------------

SubgroupPanel parse_subgroup_csv(std::istream& in, int groups, const WaveIntervals& intervals) {
  std::vector<SubgroupRecord> records;
  std::set<std::tuple<int, int, int>> seen;
  read_csv(in, {"age", "quintile", "wave", "exposure", "deaths"}, [&](const auto& f, long row) {
    SubgroupRecord r;
    r.age = parse_int(f[0], "age", row);
    const int quintile = parse_int(f[1], "quintile", row);
    r.wave = parse_int(f[2], "wave", row);
    r.exposure = parse_real(f[3], "exposure", row);
    r.deaths = parse_real(f[4], "deaths", row);
    if (quintile < 1 || quintile > groups) {
      throw ParseError("quintile " + std::to_string(quintile) + " outside 1.." + std::to_string(groups), row);
    }
    r.group = quintile - 1;
    if (!intervals.count(r.wave)) {
      throw ParseError("wave " + std::to_string(r.wave) + " has no configured interval length", row);
    }
    if (r.exposure < 0.0) throw ParseError("negative exposure", row);
    if (r.deaths < 0.0) throw ParseError("negative deaths", row);
    if (r.deaths > r.exposure) throw ParseError("deaths exceed exposure", row);
    if (!seen.emplace(r.age, r.group, r.wave).second) throw ParseError("duplicate cell", row);
    records.push_back(r);
  });
  return SubgroupPanel(std::move(records), groups, intervals);
}

SubgroupPanel read_subgroup_csv(const std::filesystem::path& path, int groups,
                                const WaveIntervals& intervals) {
  auto in = open_in(path);
  return parse_subgroup_csv(in, groups, intervals);
}

void write_subgroup_csv(std::ostream& out, const std::vector<SubgroupRecord>& records) {
  out << "age,quintile,wave,exposure,deaths\n";
  for (const auto& r : records) {
    out << r.age << ',' << (r.group + 1) << ',' << r.wave << ',' << format_double(r.exposure) << ','
        << format_double(r.deaths) << '\n';
  }
}

void write_subgroup_csv(const std::filesystem::path& path, const SubgroupPanel& panel) {
  auto out = open_out(path);
  write_subgroup_csv(out, panel.records());
}

// --- JSON --------------------------------------------------------------

Json to_json(const LCParams& p) {
  return {{"first_age", p.first_age}, {"first_year", p.first_year}, {"ref_year", p.ref_year},
          {"alpha", p.alpha},         {"beta", p.beta},             {"kappa", p.kappa}};
}

LCParams lc_from_json(const Json& j) {
  reject_unknown(j, {"first_age", "first_year", "ref_year", "alpha", "beta", "kappa"}, "LC parameter");
  LCParams p;
  p.first_age = require<int>(j, "first_age");
  p.first_year = require<int>(j, "first_year");
  p.ref_year = require<int>(j, "ref_year");
  p.alpha = require<std::vector<double>>(j, "alpha");
  p.beta = require<std::vector<double>>(j, "beta");
  p.kappa = require<std::vector<double>>(j, "kappa");
  if (p.alpha.empty() || p.alpha.size() != p.beta.size() || p.kappa.empty()) {
    throw ValidationError("LC parameters need matching alpha/beta and a non-empty kappa");
  }
  if (p.ref_year < p.first_year || p.ref_year > p.last_year()) {
    throw ValidationError("reference year outside the kappa range");
  }
  return p;
}

Json to_json(const HermiteSpec& s) {
  return {{"variant", std::string(to_string(s.variant()))},
          {"theta", s.theta_values()},
          {"omega", s.omega_values()},
          {"mu0", s.mu0_values()},
          {"mu1", s.mu1_values()}};
}

HermiteSpec spec_from_json(const Json& j) {
  reject_unknown(j, {"variant", "theta", "omega", "mu0", "mu1"}, "Hermite specification");
  return HermiteSpec(variant_from_string(require<std::string>(j, "variant")),
                     require<std::vector<double>>(j, "theta"), require<std::vector<double>>(j, "omega"),
                     require<std::vector<double>>(j, "mu0"), require<std::vector<double>>(j, "mu1"));
}

Json to_json(const RuleSchedule& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"knots", s.knots},
          {"values", s.values},
          {"cumulative", s.cumulative},
          {"objective", s.objective},
          {"anchors", s.anchor_source}};
}

RuleSchedule schedule_from_json(const Json& j) {
  reject_unknown(j, {"kind", "knots", "values", "cumulative", "objective", "anchors"}, "schedule");
  RuleSchedule s;
  s.kind = rule_kind_from_string(require<std::string>(j, "kind"));
  s.knots = require<std::vector<double>>(j, "knots");
  s.values = require<std::vector<double>>(j, "values");
  s.cumulative = require<std::vector<double>>(j, "cumulative");
  s.objective = require<double>(j, "objective");
  s.anchor_source = require<std::string>(j, "anchors");
  s.validate();
  return s;
}

Json to_json(const AnchorSet& a) {
  return {{"source", a.source},
          {"means", a.quintiles.means},
          {"lower_bounds", a.quintiles.lower},
          {"fair_months", a.anchors.months}};
}

AnchorSet anchors_from_json(const Json& j) {
  reject_unknown(j, {"source", "means", "lower_bounds", "fair_months"}, "anchor");
  AnchorSet a;
  a.quintiles.means = require<std::vector<double>>(j, "means");
  a.quintiles.lower = require<std::vector<double>>(j, "lower_bounds");
  a.anchors.months = require<std::vector<double>>(j, "fair_months");
  a.source = j.contains("source") ? require<std::string>(j, "source") : "file";
  a.validate();
  return a;
}

Json to_json(const WaveIntervals& intervals) {
  Json j = Json::object();
  for (const auto& [wave, length] : intervals) j[std::to_string(wave)] = length;
  return j;
}

WaveIntervals intervals_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("wave intervals must be a JSON object");
  WaveIntervals out;
  for (const auto& [key, value] : j.items()) {
    int wave = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), wave);
    if (ec != std::errc() || ptr != key.data() + key.size()) {
      throw ValidationError("wave key '" + key + "' is not a year");
    }
    if (!value.is_number() || !(value.get<double>() > 0.0)) {
      throw ValidationError("wave " + key + " needs a positive interval length");
    }
    out[wave] = value.get<double>();
  }
  if (out.empty()) throw ValidationError("wave interval table is empty");
  return out;
}

void RunConfig::validate() const {
  if (!(r > -1.0) || !std::isfinite(r)) throw ValidationError("discount rate must exceed -1");
  if (!(phi > 0.0)) throw ValidationError("account scale must be positive");
  grid.validate();
  if (retirement_ages.empty()) throw ValidationError("at least one retirement age is required");
  for (const int a : retirement_ages) {
    if (a < grid.x0 || a >= grid.x1) throw ValidationError("retirement age outside the age grid");
  }
  if (horizon < ref_year) throw ValidationError("projection horizon precedes the reference year");
  if (n_paths < 1) throw ValidationError("path count must be positive");
  if (groups < 1) throw ValidationError("group count must be positive");
}

Json to_json(const RunConfig& c) {
  return {{"r", c.r},
          {"phi", c.phi},
          {"ref_year", c.ref_year},
          {"age_grid", {{"x0", c.grid.x0}, {"x1", c.grid.x1}}},
          {"retirement_ages", c.retirement_ages},
          {"horizon", c.horizon},
          {"n_paths", c.n_paths},
          {"seed", c.seed},
          {"groups", c.groups},
          {"wave_intervals", to_json(c.wave_intervals)},
          {"national", c.national_path},
          {"subgroup", c.subgroup_path},
          {"anchors", c.anchors_path},
          {"output_dir", c.output_dir}};
}

RunConfig config_from_json(const Json& j) {
  reject_unknown(j,
                 {"r", "phi", "ref_year", "age_grid", "retirement_ages", "horizon", "n_paths", "seed",
                  "groups", "wave_intervals", "national", "subgroup", "anchors", "output_dir"},
                 "config");
  RunConfig c;
  if (j.contains("r")) c.r = require<double>(j, "r");
  if (j.contains("phi")) c.phi = require<double>(j, "phi");
  if (j.contains("ref_year")) c.ref_year = require<int>(j, "ref_year");
  if (j.contains("age_grid")) {
    const Json& g = j.at("age_grid");
    reject_unknown(g, {"x0", "x1"}, "age grid");
    if (g.contains("x0")) c.grid.x0 = require<int>(g, "x0");
    if (g.contains("x1")) c.grid.x1 = require<int>(g, "x1");
  }
  if (j.contains("retirement_ages")) c.retirement_ages = require<std::vector<int>>(j, "retirement_ages");
  if (j.contains("horizon")) c.horizon = require<int>(j, "horizon");
  if (j.contains("n_paths")) c.n_paths = require<int>(j, "n_paths");
  if (j.contains("seed")) c.seed = require<std::uint64_t>(j, "seed");
  if (j.contains("groups")) c.groups = require<int>(j, "groups");
  if (j.contains("wave_intervals")) c.wave_intervals = intervals_from_json(j.at("wave_intervals"));
  if (j.contains("national")) c.national_path = require<std::string>(j, "national");
  if (j.contains("subgroup")) c.subgroup_path = require<std::string>(j, "subgroup");
  if (j.contains("anchors")) c.anchors_path = require<std::string>(j, "anchors");
  if (j.contains("output_dir")) c.output_dir = require<std::string>(j, "output_dir");
  c.validate();
  return c;
}

Json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

// --- synthetic ---------------------------------------------------------

void SyntheticTruth::validate() const {
  grid.validate();
  if (!(exposure_scale >= 0.0) || !std::isfinite(exposure_scale)) {
    throw ValidationError("exposure scale must be non-negative");
  }
  if (subgroup_first_age > subgroup_last_age || subgroup_first_age < grid.x0 ||
      subgroup_last_age > grid.x1 || subgroup_first_age < lc.first_age ||
      subgroup_last_age > lc.last_age()) {
    throw ValidationError("subgroup ages must lie inside the LC and Hermite age ranges");
  }
  double beta_sum = 0.0;
  for (const double b : lc.beta) beta_sum += b;
  if (std::abs(beta_sum - 1.0) > 1e-10 || lc.kappa_at(lc.ref_year) != 0.0) {
    throw ValidationError("truth LC parameters are not normalized");
  }
  for (const auto& [wave, length] : wave_intervals) {
    if (wave < lc.first_year || wave > lc.last_year()) {
      throw ValidationError("wave " + std::to_string(wave) + " outside the LC year range");
    }
    if (!(length > 0.0)) throw ValidationError("wave intervals must be positive");
  }
  if (spec.variant() != Variant::GompertzFree && spec.variant() != Variant::GompertzConstrained) {
    if (!check_non_crossover(spec).ok) throw ValidationError("truth violates the non-crossover condition");
  }
}

Json to_json(const SyntheticTruth& t) {
  return {{"lc", to_json(t.lc)},
          {"spec", to_json(t.spec)},
          {"age_grid", {{"x0", t.grid.x0}, {"x1", t.grid.x1}}},
          {"subgroup_ages", {t.subgroup_first_age, t.subgroup_last_age}},
          {"wave_intervals", to_json(t.wave_intervals)},
          {"exposure_scale", t.exposure_scale},
          {"seed", t.seed}};
}

SyntheticTruth truth_from_json(const Json& j) {
  reject_unknown(j, {"lc", "spec", "age_grid", "subgroup_ages", "wave_intervals", "exposure_scale", "seed"},
                 "synthetic truth");
  const auto ages = require<std::vector<int>>(j, "subgroup_ages");
  if (ages.size() != 2) throw ValidationError("subgroup_ages must hold [first, last]");
  const Json& g = j.at("age_grid");
  SyntheticTruth t{lc_from_json(j.at("lc")),
                   spec_from_json(j.at("spec")),
                   AgeGrid{require<int>(g, "x0"), require<int>(g, "x1")},
                   ages[0],
                   ages[1],
                   intervals_from_json(j.at("wave_intervals")),
                   require<double>(j, "exposure_scale"),
                   require<std::uint64_t>(j, "seed")};
  t.validate();
  return t;
}

SyntheticTruth reference_truth(std::uint64_t seed, double exposure_scale) {
  const int first_age = 50, last_age = 100, first_year = 2011, last_year = 2020;
  std::vector<double> alpha, beta, kappa;
  for (int x = first_age; x <= last_age; ++x) {
    alpha.push_back(-5.5 + 0.085 * (x - first_age));
    beta.push_back((1.5 - (x - first_age) / 50.0) / 51.0);
  }
  for (int t = first_year; t <= last_year; ++t) {
    kappa.push_back(2.5 * (last_year - t) + 0.4 * std::sin(1.3 * t));
  }
  LCParams lc = normalize_lc(first_age, first_year, alpha, beta, kappa, 2020);
  HermiteSpec spec(Variant::HSM3, {-5.3, -5.45, -5.6, -5.75, -5.9}, {-0.8}, {6.0, 6.1, 6.2, 6.3, 6.4},
                   {0.5});
  SyntheticTruth t{std::move(lc), std::move(spec), AgeGrid{}, 50, 100, default_wave_intervals(),
                   exposure_scale, seed};
  t.validate();
  return t;
}

NationalPanel SyntheticData::national_panel() const {
  if (national.empty()) throw ValidationError("national table is empty");
  const int a0 = national.front().age, a1 = national.back().age;
  const int y0 = national.front().year, y1 = national.back().year;
  std::vector<double> deaths, exposure;
  for (const auto& r : national) {
    deaths.push_back(r.deaths);
    exposure.push_back(r.exposure);
  }
  return NationalPanel(a0, a1 - a0 + 1, y0, y1 - y0 + 1, std::move(deaths), std::move(exposure));
}

SubgroupPanel SyntheticData::subgroup_panel(const SyntheticTruth& truth) const {
  return SubgroupPanel(subgroup, truth.spec.groups(), truth.wave_intervals);
}

SyntheticData generate_synthetic(const SyntheticTruth& truth) {
  truth.validate();
  SyntheticData data;
  const auto draw = [](const rng::Key& key, std::uint64_t stream, double mean) {
    if (mean <= 0.0) return 0.0;
    rng::PhiloxEngine engine(key, stream);
    std::poisson_distribution<long long> poisson(mean);
    return static_cast<double>(poisson(engine));
  };

  const rng::Key national_key = rng::stage_key(truth.seed, "synthetic-national");
  std::uint64_t stream = 0;
  for (int x = truth.lc.first_age; x <= truth.lc.last_age(); ++x) {
    for (int t = truth.lc.first_year; t <= truth.lc.last_year(); ++t, ++stream) {
      const double e = truth.exposure_scale;
      const double m = std::exp(fitted_log_m(truth.lc, x, t));
      data.national.push_back({x, t, draw(national_key, stream, e * m), e});
    }
  }

  const rng::Key subgroup_key = rng::stage_key(truth.seed, "synthetic-subgroup");
  stream = 0;
  for (int x = truth.subgroup_first_age; x <= truth.subgroup_last_age; ++x) {
    for (int j = 0; j < truth.spec.groups(); ++j) {
      for (const auto& [wave, length] : truth.wave_intervals) {
        const double l = truth.exposure_scale;
        const double m = group_surface(truth.spec, truth.lc, truth.grid, x, j, wave);
        if (length * m >= 1.0) {
          throw ValidationError("truth implies more expected deaths than persons at age " +
                                std::to_string(x) + ", wave " + std::to_string(wave));
        }
        const double d = draw(subgroup_key, stream++, length * l * m);
        if (d > l) throw ValidationError("sampled deaths exceed exposure; lower the age range");
        data.subgroup.push_back({x, j, wave, l, d});
      }
    }
  }
  return data;
}

}  // namespace ndc::io
