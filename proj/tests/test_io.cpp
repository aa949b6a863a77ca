#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ndc/errors.hpp"
#include "ndc/io.hpp"

using namespace ndc;
using namespace ndc::io;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ndc_io_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

long parse_error_row(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_national_csv(in);
  } catch (const ParseError& e) {
    return e.row();
  }
  return -1;
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_fixed(12.95, 1) == "13.0");
  CHECK(format_fixed(157.0, 1) == "157.0");
  CHECK(format_fixed(-0.05, 1) == "-0.1");
}

TEST_CASE("national csv") {
  std::istringstream ok("age,year,deaths,exposure\n60,2019,1,100\n60,2020,2,100\n61,2019,3,90\n61,2020,4,90\n");
  const NationalPanel p = parse_national_csv(ok);
  CHECK(p.age_count() == 2);
  CHECK(p.year_count() == 2);
  CHECK(p.deaths(61, 2019) == 3);

  std::istringstream missing("age,year,deaths,exposure\n60,2019,1,100\n60,2020,2,100\n61,2019,3,90\n");
  try {
    parse_national_csv(missing);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("age 61, year 2020") != std::string::npos);
  }
  CHECK(parse_error_row("age,year,deaths,exposure\n60,2019,1,100\n60,2020,2,0\n") == 3);
  CHECK(parse_error_row("age,year,deaths,exposure\n60,2019,1,100\n60,2019,2,10\n") == 3);
  CHECK(parse_error_row("age,year,deaths,exposure\n60,2019,-1,100\n") == 2);
  CHECK(parse_error_row("age,year,deaths\n60,2019,1\n") == 1);
  CHECK(parse_error_row("age,year,deaths,exposure\n60,2019,x,100\n") == 2);
}

TEST_CASE("subgroup csv") {
  std::istringstream one("age,quintile,wave,exposure,deaths\n60,1,2015,100,6\n");
  const SubgroupPanel p = parse_subgroup_csv(one);
  REQUIRE(p.records().size() == 1);
  CHECK(p.records()[0].group == 0);
  CHECK(p.interval(2015) == 3.0);
  LCParams lc{60, 2011, 2020, {-4.0}, {1.0}, std::vector<double>(10, 0.0)};
  const auto cells = build_pooled(p, lc);
  CHECK(cells[0].deaths == doctest::Approx(2.0));

  std::istringstream q6("age,quintile,wave,exposure,deaths\n60,6,2015,100,6\n");
  CHECK_THROWS_AS(parse_subgroup_csv(q6), ParseError);
  std::istringstream heavy("age,quintile,wave,exposure,deaths\n60,1,2015,100,101\n");
  CHECK_THROWS_AS(parse_subgroup_csv(heavy), ParseError);
  std::istringstream wave("age,quintile,wave,exposure,deaths\n60,1,2016,100,1\n");
  CHECK_THROWS_AS(parse_subgroup_csv(wave), ParseError);
  std::istringstream custom("age,quintile,wave,exposure,deaths\n60,1,2016,100,1\n");
  CHECK(parse_subgroup_csv(custom, 5, {{2016, 4.0}}).interval(2016) == 4.0);
}

TEST_CASE("json round trips") {
  const SyntheticTruth truth = reference_truth(3, 1e6);
  CHECK(lc_from_json(Json::parse(to_json(truth.lc).dump())) == truth.lc);
  CHECK(spec_from_json(Json::parse(to_json(truth.spec).dump())) == truth.spec);
  CHECK(truth_from_json(Json::parse(to_json(truth).dump())) == truth);

  const AnchorSet a = AnchorSet::reference();
  const AnchorSet back = anchors_from_json(Json::parse(to_json(a).dump()));
  CHECK(back.anchors.months == a.anchors.months);
  CHECK(back.quintiles.means == a.quintiles.means);
  CHECK(back.quintiles.lower == a.quintiles.lower);
  CHECK(back.source == a.source);

  const RuleSchedule s = method4_calibrate(a);
  CHECK(schedule_from_json(Json::parse(to_json(s).dump())) == s);
  CHECK(intervals_from_json(Json::parse(to_json(default_wave_intervals()).dump())) == default_wave_intervals());

  RunConfig c;
  c.seed = 18446744073709551615ull;
  c.r = 0.0325;
  c.retirement_ages = {55, 60, 65};
  const RunConfig cb = config_from_json(Json::parse(to_json(c).dump()));
  CHECK(cb.seed == c.seed);
  CHECK(cb.r == c.r);
  CHECK(cb.retirement_ages == c.retirement_ages);
  CHECK(config_from_json(Json::object()).n_paths == 1000);
  CHECK_THROWS_AS(config_from_json(Json{{"bogus", 1}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"r", -2.0}}), ValidationError);
}

TEST_CASE("csv files round trip exactly") {
  const auto dir = temp_dir("csv");
  SyntheticTruth truth = reference_truth(9, 1e4);
  const SyntheticData data = generate_synthetic(truth);
  const NationalPanel national = data.national_panel();
  write_national_csv(dir / "n.csv", national);
  const NationalPanel back = read_national_csv(dir / "n.csv");
  CHECK(back.deaths_data() == national.deaths_data());
  CHECK(back.exposure_data() == national.exposure_data());

  const SubgroupPanel sub = data.subgroup_panel(truth);
  write_subgroup_csv(dir / "s.csv", sub);
  const SubgroupPanel sback = read_subgroup_csv(dir / "s.csv");
  REQUIRE(sback.records().size() == sub.records().size());
  for (std::size_t i = 0; i < sub.records().size(); ++i) {
    const auto& x = sub.records()[i];
    const auto& y = sback.records()[i];
    CHECK((x.age == y.age && x.group == y.group && x.wave == y.wave && x.deaths == y.deaths &&
           x.exposure == y.exposure));
  }
  write_national_csv(dir / "n2.csv", back);
  CHECK(slurp(dir / "n.csv") == slurp(dir / "n2.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic generation") {
  const SyntheticData a = generate_synthetic(reference_truth(5, 1e5));
  const SyntheticData b = generate_synthetic(reference_truth(5, 1e5));
  const SyntheticData c = generate_synthetic(reference_truth(6, 1e5));
  REQUIRE(a.national.size() == b.national.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.national.size(); ++i) {
    same = same && a.national[i].deaths == b.national[i].deaths;
    differs = differs || a.national[i].deaths != c.national[i].deaths;
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.subgroup.size() == 51 * 5 * 4);

  const SyntheticTruth zero = reference_truth(5, 0.0);
  const SyntheticData z = generate_synthetic(zero);
  for (const auto& r : z.national) CHECK(r.deaths == 0.0);
  for (const auto& r : z.subgroup) CHECK(r.deaths == 0.0);
  CHECK_THROWS_AS(z.national_panel(), ValidationError);
}
