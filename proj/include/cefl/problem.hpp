#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cefl/bound_estimator.hpp"
#include "cefl/decision.hpp"
#include "cefl/network_model.hpp"

namespace cefl {

struct ObjectiveWeights {
  double xi1 = 1e-6;  // ML bound weight
  double xi2 = 0.05;  // delay weight
  double xi3 = 1.0;   // energy weight
  std::array<double, 6> xi3_sub = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
};

struct SparseRow {
  std::vector<int> idx;
  std::vector<double> val;
  double dot(const Vec& x) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) acc += val[k] * x(idx[k]);
    return acc;
  }
};

struct ConstraintFamily {
  std::string name;
  int first_row = 0;
  int count = 0;
};

// Gradient rows at a reference point. The dc_agg family's rows differ from a
// shared per-(DC, BS) base row only in two entries, which the solver exploits;
// everything else is materialized.
struct StructuredGrads {
  int total_rows = 0;
  std::vector<SparseRow> generic;  // size total_rows; dc_agg entries left empty
  int dc_first = 0;
  int dc_rows_per_group = 0;                // N*B
  std::vector<SparseRow> dc_base;           // one per (s, b') group
  std::vector<int> dc_group_node;           // owning node per group
  std::vector<std::array<std::pair<int, double>, 2>> dc_extra;  // per dc row

  bool is_dc_row(int r) const {
    return dc_rows_per_group > 0 && r >= dc_first &&
           r < dc_first + static_cast<int>(dc_base.size()) * dc_rows_per_group;
  }
  int group_of(int r) const { return (r - dc_first) / dc_rows_per_group; }
  // Materializes one row (for tests and generic consumers).
  SparseRow materialize(int r) const;
  // dot(grad_row, x) for any row.
  double row_dot(int r, const Vec& x) const;
};

struct FeasibilityIssue {
  std::string name;
  double residual = 0.0;
};

struct FeasibilityReport {
  std::vector<FeasibilityIssue> violations;
  bool ok() const { return violations.empty(); }
};

// Expanded-space formulation of the per-round orchestration problem: strongly
// structured objective, the nonconvex inequality rows (inner max operators
// expanded to one smooth row per argument), the copy-agreement equalities and
// the per-node convex sets.
class Problem {
 public:
  Problem(Topology topo, Vec ue_data, BoundParams bounds, ObjectiveWeights weights,
          MlHyperParams hp);

  const Topology& topology() const { return topo_; }
  const VariableLayout& layout() const { return layout_; }
  const Vec& ue_data() const { return ue_data_; }
  const ObjectiveWeights& weights() const { return weights_; }
  const BoundParams& bounds() const { return bounds_; }
  const MlHyperParams& hyper() const { return hp_; }

  int dim() const { return layout_.total_dim; }
  int num_constraints() const { return mC_; }
  int num_equalities() const { return static_cast<int>(eq_rows_.size()); }
  int num_nodes() const { return static_cast<int>(layout_.nodes.size()); }

  double objective(const Vec& w) const;
  Vec objective_gradient(const Vec& w) const;
  double objective_physical(const DecisionVector& v) const {
    return objective(layout_.pack(v, topo_));
  }
  BoundTerms bound_terms_physical(const DecisionVector& v) const;

  Vec constraint_values(const Vec& w) const;
  std::vector<SparseRow> constraint_gradients(const Vec& w) const;
  StructuredGrads constraint_gradients_structured(const Vec& w) const;
  const std::vector<ConstraintFamily>& families() const { return families_; }
  const Vec& curvature() const { return curvature_; }
  void set_curvature(Vec L) { curvature_ = std::move(L); }
  // Finite-difference curvature per family over sampled feasible points, with
  // a safety factor.
  void estimate_curvature(Rng& rng, int samples = 200, double h = 0.25,
                          double safety = 2.0);

  const std::vector<SparseRow>& equality_rows() const { return eq_rows_; }
  const Vec& equality_rhs() const { return eq_rhs_; }
  // Node carrying the rhs share of each equality row.
  const std::vector<int>& equality_anchor() const { return eq_anchor_; }
  Vec equality_residuals(const Vec& w) const;

  // Node owning expanded coordinate k.
  int node_of_coord(int k) const;

  DecisionVector initial_point() const;
  FeasibilityReport feasibility_check(const DecisionVector& v, double tol = 1e-6) const;

  // Freezes the relaxed indicator coordinates at the given values (used by the
  // integer-recovery polish step).
  void freeze_indicators(const DecisionVector& v);
  bool indicators_frozen() const { return frozen_.has_value(); }

  std::vector<VariableLayout::SetBlock> node_sets(int node) const;
  Vec project_node_sets(const Vec& w) const;
  Vec sample_feasible(Rng& rng) const { return layout_.sample_feasible(topo_, rng); }

 private:
  double objective_impl(const Vec& w, Vec* grad) const;
  void eval_constraints(const Vec& w, Vec* values, StructuredGrads* grads) const;
  void build_equalities();
  void build_families();

  Topology topo_;
  Vec ue_data_;
  BoundParams bounds_;
  ObjectiveWeights weights_;
  MlHyperParams hp_;
  VariableLayout layout_;

  int mC_ = 0;
  std::vector<ConstraintFamily> families_;
  Vec curvature_;

  std::vector<SparseRow> eq_rows_;
  Vec eq_rhs_;
  std::vector<int> eq_anchor_;

  std::optional<DecisionVector> frozen_;
};

}  // namespace cefl
