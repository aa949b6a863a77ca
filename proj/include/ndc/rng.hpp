#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace ndc::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

Counter philox4x32(Counter counter, Key key);

// Key for a named stage derived from the single run seed.
Key stage_key(std::uint64_t seed, std::string_view stage);

// Standard normal draw addressed by (stream, index); independent of call order.
double normal_at(const Key& key, std::uint64_t stream, std::uint64_t index);

// UniformRandomBitGenerator over one Philox stream, for std distributions.
class PhiloxEngine {
 public:
  using result_type = std::uint32_t;

  PhiloxEngine(Key key, std::uint64_t stream) : key_(key), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

 private:
  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Counter buffer_{};
  int used_ = 4;
};

}  // namespace ndc::rng
