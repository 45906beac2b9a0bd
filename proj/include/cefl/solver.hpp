#pragma once

#include <string>
#include <vector>

#include "cefl/problem.hpp"

namespace cefl {

struct SolverConfig {
  double lambda1 = 1.0;      // proximal weight of the surrogate objective
  double sca_step = 0.01;    // convex-combination step toward the surrogate solution
  double kappa = 0.001;      // dual step for the inequality multipliers
  double epsilon = 0.001;    // dual step for the equality multipliers
  double consensus_z = 0.02; // consensus edge weight
  int consensus_rounds = 10; // J
  int sca_max_iters = 40;
  int pd_max_iters = 25;
  int primal_max_iters = 500;
  double primal_tol = 1e-6;
  double pd_tol = 1e-4;
  double sca_tol = 1e-4;
  bool centralized = false;
  // Dual ascent on the true constraint residuals (default) or on the
  // surrogate residuals (the literal update rule; prone to multiplier
  // inflation through the shared quadratic term once any coordinate moves
  // far, see the decisions log).
  bool surrogate_dual_residuals = false;
  // Carry the dual state across successive convex iterations instead of
  // cold-starting each inner loop (the initialization is a free choice).
  bool dual_warm_start = true;
  std::uint64_t curvature_seed = 1;
  int curvature_samples = 200;

  void validate(int max_degree) const;
  TomlDoc to_toml() const;
  static SolverConfig from_toml(const TomlDoc& doc);
};

// Frozen first-order data of one SCA reference point: everything the per-node
// surrogates need.
struct SurrogateRef {
  Vec w_ref;
  double j_ref = 0.0;
  Vec j_grad;
  Vec c_ref;               // constraint values at the reference
  StructuredGrads c_grad;  // gradient rows at the reference
  Vec curvature;           // per-row quadratic constants
};

SurrogateRef build_surrogate(const Problem& problem, const Vec& w_ref);

// Surrogate objective and constraint values at w (whole-vector forms).
double surrogate_objective(const SurrogateRef& s, const Vec& w, double lambda1);
Vec surrogate_constraints(const SurrogateRef& s, const Problem& problem, const Vec& w);

// Full Lagrangian of the surrogate problem.
double evaluate_lagrangian(const Problem& problem, const SurrogateRef& s, const Vec& w,
                           const Vec& lambda, const Vec& omega, double lambda1);

// Consensus weight matrix: W_dd = 1 - z deg(d), W_dd' = z on edges.
Mat build_consensus_weights(const Eigen::MatrixXi& adjacency, double z);
int count_components(const Eigen::MatrixXi& adjacency);

// J synchronous rounds of neighbor averaging over the rows of `state`
// (one row per node); afterwards the first `lambda_cols` columns are clipped
// at zero.
void consensus_run(Mat& state, const Mat& W, int rounds, int lambda_cols);

// Projected gradient descent for one node's strongly convex subproblem
//   min_x  g'(x - ref) + (c/2)||x - ref||^2   s.t. x in the node's sets.
Vec primal_solve_node(const Problem& problem, int node, const Vec& ref_node,
                      const Vec& g_node, double c, int max_iters, double tol,
                      int* iters_out = nullptr,
                      const std::vector<VariableLayout::SetBlock>* cached_blocks = nullptr);

struct PdResult {
  Vec w_hat;
  Mat duals;  // (mC + mE) x nodes, final per-node copies
  bool converged = false;
  int iters = 0;
};

// Alternating primal solves and dual ascent with decentralized consensus (or
// exact global averaging in centralized mode).
PdResult pd_solve(const Problem& problem, const SurrogateRef& s, const SolverConfig& cfg,
                  const Mat* duals_init = nullptr);

struct SolveTrace {
  std::vector<double> objective;
  std::vector<double> binary_residual;
  int sca_iters = 0;
  int pd_iters_total = 0;
  bool monotone = true;
  bool converged = false;
  std::string warning;
};

struct SolveResult {
  DecisionVector solution;
  Vec w_final;
  double objective_value = 0.0;
  SolveTrace trace;
};

// The successive convex wrapper. `warm_start` (expanded vector) overrides the
// standard initial point.
SolveResult sca_solve(Problem& problem, const SolverConfig& cfg,
                      const Vec* warm_start = nullptr);

SolveResult centralized_solve(Problem& problem, const SolverConfig& cfg,
                              const Vec* warm_start = nullptr);

// Rounds the relaxed indicators to one-hot (lowest index wins ties), polishes
// the continuous variables with a short frozen re-solve, and re-tightens the
// delay variables.
DecisionVector recover_integers(const Problem& problem, const DecisionVector& relaxed,
                                const SolverConfig& cfg);

// Binary residual of the indicator blocks at a physical point.
double binary_residual(const DecisionVector& v);

// Projects a physical decision onto the exact per-variable constraint sets
// (row simplices, boxes, rate caps). Consensus averaging leaves small
// disagreements; execution paths restore exact feasibility first.
DecisionVector restore_decision(const Problem& problem, DecisionVector v);

}  // namespace cefl
