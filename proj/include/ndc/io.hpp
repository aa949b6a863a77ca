#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ndc/hermite.hpp"
#include "ndc/national_lc.hpp"
#include "ndc/rules.hpp"
#include "ndc/subgroup_fit.hpp"

namespace ndc::io {

using Json = nlohmann::json;

// Shortest representation that parses back to the same double.
std::string format_double(double value);
// Fixed notation, rounded half away from zero at the given decimals.
std::string format_fixed(double value, int decimals);

// --- CSV ---------------------------------------------------------------

struct NationalRow {
  int age = 0;
  int year = 0;
  double deaths = 0.0;
  double exposure = 0.0;
};

// Header `age,year,deaths,exposure`. Rows may come in any order; the grid must
// be rectangular, and cells with zero exposure are rejected.
NationalPanel parse_national_csv(std::istream& in);
NationalPanel read_national_csv(const std::filesystem::path& path);
void write_national_csv(std::ostream& out, const std::vector<NationalRow>& rows);
void write_national_csv(const std::filesystem::path& path, const NationalPanel& panel);
std::vector<NationalRow> national_rows(const NationalPanel& panel);

// Header `age,quintile,wave,exposure,deaths`; quintiles are numbered from 1.
SubgroupPanel parse_subgroup_csv(std::istream& in, int groups = 5,
                                 const WaveIntervals& intervals = default_wave_intervals());
SubgroupPanel read_subgroup_csv(const std::filesystem::path& path, int groups = 5,
                                const WaveIntervals& intervals = default_wave_intervals());
void write_subgroup_csv(std::ostream& out, const std::vector<SubgroupRecord>& records);
void write_subgroup_csv(const std::filesystem::path& path, const SubgroupPanel& panel);

// --- JSON --------------------------------------------------------------

Json to_json(const LCParams& params);
LCParams lc_from_json(const Json& j);

Json to_json(const HermiteSpec& spec);
HermiteSpec spec_from_json(const Json& j);

Json to_json(const RuleSchedule& schedule);
RuleSchedule schedule_from_json(const Json& j);

Json to_json(const AnchorSet& anchors);
AnchorSet anchors_from_json(const Json& j);

Json to_json(const WaveIntervals& intervals);
WaveIntervals intervals_from_json(const Json& j);

struct RunConfig {
  double r = 0.07;
  double phi = kDefaultAccountScale;
  int ref_year = 2020;
  AgeGrid grid{};
  std::vector<int> retirement_ages{60, 63};
  int horizon = 2040;
  int n_paths = 1000;
  std::uint64_t seed = 20201;
  int groups = 5;
  WaveIntervals wave_intervals = default_wave_intervals();
  std::string national_path;
  std::string subgroup_path;
  std::string anchors_path;
  std::string output_dir = ".";

  void validate() const;
};

Json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

// --- Synthetic data ----------------------------------------------------

struct SyntheticTruth {
  LCParams lc;
  HermiteSpec spec;
  AgeGrid grid{};
  int subgroup_first_age = 50;
  int subgroup_last_age = 100;
  WaveIntervals wave_intervals = default_wave_intervals();
  double exposure_scale = 1e8;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SyntheticTruth&) const = default;
};

Json to_json(const SyntheticTruth& truth);
SyntheticTruth truth_from_json(const Json& j);

// Normalized LC surface on ages 50..100, years 2011..2020 and an HSM-III
// five-group baseline that satisfies every shape restriction.
SyntheticTruth reference_truth(std::uint64_t seed, double exposure_scale = 1e8);

struct SyntheticData {
  std::vector<NationalRow> national;
  std::vector<SubgroupRecord> subgroup;

  // Throws when the national table has zero-exposure cells.
  NationalPanel national_panel() const;
  SubgroupPanel subgroup_panel(const SyntheticTruth& truth) const;
};

// Poisson draws from the exact model equations, one substream per cell.
SyntheticData generate_synthetic(const SyntheticTruth& truth);

}  // namespace ndc::io
