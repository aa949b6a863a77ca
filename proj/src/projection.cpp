#include "ndc/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ndc/errors.hpp"
#include "ndc/rng.hpp"

namespace ndc {

namespace rng {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

Counter philox4x32(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

Key stage_key(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (const char ch : stage) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  const std::uint64_t mixed = splitmix64(seed ^ splitmix64(h));
  return {static_cast<std::uint32_t>(mixed), static_cast<std::uint32_t>(mixed >> 32)};
}

double normal_at(const Key& key, std::uint64_t stream, std::uint64_t index) {
  const Counter out = philox4x32({static_cast<std::uint32_t>(index),
                                  static_cast<std::uint32_t>(index >> 32),
                                  static_cast<std::uint32_t>(stream),
                                  static_cast<std::uint32_t>(stream >> 32)},
                                 key);
  const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;          // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

PhiloxEngine::result_type PhiloxEngine::operator()() {
  if (used_ == 4) {
    buffer_ = philox4x32({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                          static_cast<std::uint32_t>(stream_),
                          static_cast<std::uint32_t>(stream_ >> 32)},
                         key_);
    ++block_;
    used_ = 0;
  }
  return buffer_[static_cast<std::size_t>(used_++)];
}

}  // namespace rng

RwdParams fit_rwd(std::span<const double> kappa) {
  if (kappa.size() < 2) throw ValidationError("random walk fit needs at least two values");
  const auto steps = static_cast<double>(kappa.size() - 1);
  const double drift = (kappa.back() - kappa.front()) / steps;
  double ss = 0.0;
  for (std::size_t t = 1; t < kappa.size(); ++t) {
    const double dev = kappa[t] - kappa[t - 1] - drift;
    ss += dev * dev;
  }
  return {drift, std::sqrt(ss / steps)};
}

KappaPaths simulate_kappa(const RwdParams& params, double kappa_base, int base_year, int horizon,
                          int n_paths, std::uint64_t seed) {
  if (horizon < 1 || n_paths < 1) throw ValidationError("horizon and path count must be positive");
  if (!(params.sigma >= 0.0)) throw ValidationError("random walk sigma must be non-negative");
  KappaPaths paths{base_year, horizon, n_paths, seed,
                   std::vector<double>(static_cast<std::size_t>(horizon) *
                                       static_cast<std::size_t>(n_paths))};
  const rng::Key key = rng::stage_key(seed, "kappa-paths");
  for (int p = 0; p < n_paths; ++p) {
    double k = kappa_base;
    for (int s = 0; s < horizon; ++s) {
      k += params.drift;
      if (params.sigma > 0.0) {
        k += params.sigma * rng::normal_at(key, static_cast<std::uint64_t>(p),
                                           static_cast<std::uint64_t>(s));
      }
      paths.values[static_cast<std::size_t>(p) * static_cast<std::size_t>(horizon) +
                   static_cast<std::size_t>(s)] = k;
    }
  }
  return paths;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty sample");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

std::vector<double> median_projection(const PathStatistic& evaluator, const KappaPaths& paths) {
  std::vector<double> medians;
  medians.reserve(static_cast<std::size_t>(paths.horizon));
  std::vector<double> sample(static_cast<std::size_t>(paths.n_paths));
  for (int s = 0; s < paths.horizon; ++s) {
    for (int p = 0; p < paths.n_paths; ++p) {
      sample[static_cast<std::size_t>(p)] = evaluator(paths.at(p, s), paths.year(s));
    }
    medians.push_back(lower_median(sample));
  }
  return medians;
}

}  // namespace ndc
