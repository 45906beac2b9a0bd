#include "cefl/projection.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cefl {

Vec project_box(const Vec& x, const Vec& lo, const Vec& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

Vec project_simplex_eq(const Vec& x, double total) {
  const int n = static_cast<int>(x.size());
  std::vector<double> u(x.data(), x.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    double t = (css - total) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      theta = t;
    }
  }
  (void)rho;
  return (x.array() - theta).cwiseMax(0.0);
}

Vec project_simplex_le(const Vec& x, double total) {
  Vec clipped = x.cwiseMax(0.0);
  if (clipped.sum() <= total) return clipped;
  return project_simplex_eq(x, total);
}

Vec project_capped_sum(const Vec& x, const Vec& lo, const Vec& hi, double cap) {
  Vec clipped = project_box(x, lo, hi);
  if (clipped.sum() <= cap) return clipped;
  if (lo.sum() > cap + 1e-12)
    throw ConstraintError("capped-sum projection: lower bounds exceed the cap");
  // sum of clip(x - theta) is nonincreasing in theta; bisect to hit the cap.
  double t_lo = 0.0;
  double t_hi = (x - lo).maxCoeff();
  for (int it = 0; it < 200; ++it) {
    double t = 0.5 * (t_lo + t_hi);
    double s = project_box(Vec(x.array() - t), lo, hi).sum();
    if (s > cap)
      t_lo = t;
    else
      t_hi = t;
    if (t_hi - t_lo < 1e-15 * std::max(1.0, t_hi)) break;
  }
  return project_box(Vec(x.array() - 0.5 * (t_lo + t_hi)), lo, hi);
}

Vec project_feasible(const Vec& x, const SetDescriptor& set) {
  switch (set.kind) {
    case SetDescriptor::Kind::Box:
      return project_box(x, set.lo, set.hi);
    case SetDescriptor::Kind::SimplexEq:
      return project_simplex_eq(x, set.total);
    case SetDescriptor::Kind::SimplexLe:
      return project_simplex_le(x, set.total);
    case SetDescriptor::Kind::CappedSum:
      return project_capped_sum(x, set.lo, set.hi, set.total);
  }
  throw DomainError("project_feasible: bad set kind");
}

}  // namespace cefl
