#pragma once

#include "cefl/topology.hpp"

namespace cefl {

Vec project_box(const Vec& x, const Vec& lo, const Vec& hi);

// Euclidean projection onto {x >= 0, sum x = total}, sort-based.
Vec project_simplex_eq(const Vec& x, double total = 1.0);

// Euclidean projection onto {x >= 0, sum x <= total}.
Vec project_simplex_le(const Vec& x, double total = 1.0);

// Euclidean projection onto {lo <= x <= hi, sum x <= cap}, bisection on the
// multiplier of the cap constraint.
Vec project_capped_sum(const Vec& x, const Vec& lo, const Vec& hi, double cap);

struct SetDescriptor {
  enum class Kind { Box, SimplexEq, SimplexLe, CappedSum } kind = Kind::Box;
  Vec lo, hi;          // Box / CappedSum bounds
  double total = 1.0;  // simplex mass or sum cap
};

Vec project_feasible(const Vec& x, const SetDescriptor& set);

}  // namespace cefl
