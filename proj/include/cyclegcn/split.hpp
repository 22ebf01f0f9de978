#pragma once

#include "cyclegcn/sparse.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace cyclegcn {

/// Disjoint node-index sets. Each set is sorted ascending.
struct SplitAssignment {
  std::vector<Index> train;
  std::vector<Index> validation;
  std::vector<Index> test;
};

/// Train / validation / test fractions; must sum to 1.
using SplitRatios = std::array<double, 3>;
inline constexpr SplitRatios kDefaultSplitRatios{0.80, 0.05, 0.15};

}  // namespace cyclegcn
