#pragma once

namespace ndc {

// One age-by-group cell of the LC-adjusted pooled cross-section.
// `deaths` is annualized; cells with zero exposure carry no information.
struct PooledCell {
  int age = 0;
  int group = 0;  // zero-based group index
  double deaths = 0.0;
  double exposure = 0.0;
};

}  // namespace ndc
