#include "cefl/solver.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>

namespace cefl {

void SolverConfig::validate(int max_degree) const {
  if (lambda1 <= 0.0) throw ConfigError("solver: lambda1 must be positive");
  if (!(sca_step > 0.0 && sca_step < 1.0))
    throw ConfigError("solver: SCA step must lie in (0,1)");
  if (kappa <= 0.0 || epsilon <= 0.0) throw ConfigError("solver: dual steps must be positive");
  if (max_degree > 0 && consensus_z >= 1.0 / max_degree)
    throw ConfigError("solver: consensus weight z must be below 1/max degree");
  if (consensus_rounds < 1) throw ConfigError("solver: need at least one consensus round");
}

TomlDoc SolverConfig::to_toml() const {
  TomlDoc doc;
  doc.set_number("solver.lambda1", lambda1);
  doc.set_number("solver.sca_step", sca_step);
  doc.set_number("solver.kappa", kappa);
  doc.set_number("solver.epsilon", epsilon);
  doc.set_number("solver.consensus_z", consensus_z);
  doc.set_number("solver.consensus_rounds", consensus_rounds);
  doc.set_number("solver.sca_max_iters", sca_max_iters);
  doc.set_number("solver.pd_max_iters", pd_max_iters);
  doc.set_number("solver.primal_max_iters", primal_max_iters);
  doc.set_number("solver.primal_tol", primal_tol);
  doc.set_number("solver.pd_tol", pd_tol);
  doc.set_number("solver.sca_tol", sca_tol);
  doc.set_number("solver.centralized", centralized ? 1 : 0);
  doc.set_number("solver.surrogate_dual_residuals", surrogate_dual_residuals ? 1 : 0);
  doc.set_number("solver.dual_warm_start", dual_warm_start ? 1 : 0);
  doc.set_number("solver.curvature_seed", static_cast<double>(curvature_seed));
  doc.set_number("solver.curvature_samples", curvature_samples);
  return doc;
}

SolverConfig SolverConfig::from_toml(const TomlDoc& doc) {
  SolverConfig c;
  c.lambda1 = doc.number_or("solver.lambda1", c.lambda1);
  c.sca_step = doc.number_or("solver.sca_step", c.sca_step);
  c.kappa = doc.number_or("solver.kappa", c.kappa);
  c.epsilon = doc.number_or("solver.epsilon", c.epsilon);
  c.consensus_z = doc.number_or("solver.consensus_z", c.consensus_z);
  c.consensus_rounds = static_cast<int>(doc.number_or("solver.consensus_rounds", c.consensus_rounds));
  c.sca_max_iters = static_cast<int>(doc.number_or("solver.sca_max_iters", c.sca_max_iters));
  c.pd_max_iters = static_cast<int>(doc.number_or("solver.pd_max_iters", c.pd_max_iters));
  c.primal_max_iters = static_cast<int>(doc.number_or("solver.primal_max_iters", c.primal_max_iters));
  c.primal_tol = doc.number_or("solver.primal_tol", c.primal_tol);
  c.pd_tol = doc.number_or("solver.pd_tol", c.pd_tol);
  c.sca_tol = doc.number_or("solver.sca_tol", c.sca_tol);
  c.centralized = doc.number_or("solver.centralized", 0) != 0;
  c.surrogate_dual_residuals = doc.number_or("solver.surrogate_dual_residuals", 0) != 0;
  c.dual_warm_start = doc.number_or("solver.dual_warm_start", 1) != 0;
  c.curvature_seed = static_cast<std::uint64_t>(doc.number_or("solver.curvature_seed", 1));
  c.curvature_samples = static_cast<int>(doc.number_or("solver.curvature_samples", c.curvature_samples));
  return c;
}

SurrogateRef build_surrogate(const Problem& problem, const Vec& w_ref) {
  SurrogateRef s;
  s.w_ref = w_ref;
  s.j_ref = problem.objective(w_ref);
  if (!std::isfinite(s.j_ref)) throw SolverError("surrogate: non-finite objective");
  s.j_grad = problem.objective_gradient(w_ref);
  if (!s.j_grad.allFinite()) throw SolverError("surrogate: non-finite objective gradient");
  s.c_ref = problem.constraint_values(w_ref);
  s.c_grad = problem.constraint_gradients_structured(w_ref);
  s.curvature = problem.curvature();
  return s;
}

double surrogate_objective(const SurrogateRef& s, const Vec& w, double lambda1) {
  Vec d = w - s.w_ref;
  return s.j_ref + s.j_grad.dot(d) + 0.5 * lambda1 * d.squaredNorm();
}

Vec surrogate_constraints(const SurrogateRef& s, const Problem& problem, const Vec& w) {
  const int V = problem.num_nodes();
  Vec d = w - s.w_ref;
  // Per-node squared displacements.
  Vec nsq(V);
  for (int node = 0; node < V; ++node) {
    const auto& slice = problem.layout().nodes[node];
    nsq(node) = d.segment(slice.offset, slice.dim).squaredNorm();
  }
  double nsq_total = nsq.sum();
  const StructuredGrads& G = s.c_grad;
  Vec out(problem.num_constraints());
  for (int r = 0; r < problem.num_constraints(); ++r) {
    if (G.is_dc_row(r)) continue;
    out(r) = s.c_ref(r) + G.generic[r].dot(d) + 0.5 * s.curvature(r) * nsq_total;
  }
  const int rpg = G.dc_rows_per_group;
  for (int grp = 0; grp < static_cast<int>(G.dc_base.size()); ++grp) {
    double base_dot = G.dc_base[grp].dot(d);
    int first = G.dc_first + grp * rpg;
    for (int r = first; r < first + rpg; ++r) {
      double acc = base_dot;
      for (const auto& [coord, val] : G.dc_extra[r - G.dc_first]) acc += val * d(coord);
      out(r) = s.c_ref(r) + acc + 0.5 * s.curvature(r) * nsq_total;
    }
  }
  return out;
}

double evaluate_lagrangian(const Problem& problem, const SurrogateRef& s, const Vec& w,
                           const Vec& lambda, const Vec& omega, double lambda1) {
  double val = surrogate_objective(s, w, lambda1);
  Vec c = surrogate_constraints(s, problem, w);
  val += lambda.dot(c);
  val += omega.dot(problem.equality_residuals(w));
  return val;
}

Mat build_consensus_weights(const Eigen::MatrixXi& adjacency, double z) {
  const int n = static_cast<int>(adjacency.rows());
  int max_deg = 0;
  for (int i = 0; i < n; ++i) {
    int deg = 0;
    for (int j = 0; j < n; ++j) deg += adjacency(i, j) != 0;
    max_deg = std::max(max_deg, deg);
  }
  if (max_deg > 0 && z >= 1.0 / max_deg)
    throw ConfigError("consensus weight z too large for the graph degree");
  Mat w = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int deg = 0;
    for (int j = 0; j < n; ++j)
      if (adjacency(i, j) != 0) {
        w(i, j) = z;
        ++deg;
      }
    w(i, i) = 1.0 - z * deg;
  }
  return w;
}

int count_components(const Eigen::MatrixXi& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  std::vector<int> comp(n, -1);
  int count = 0;
  for (int start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    std::vector<int> stack = {start};
    comp[start] = count;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int vtx = 0; vtx < n; ++vtx)
        if (adjacency(u, vtx) != 0 && comp[vtx] < 0) {
          comp[vtx] = count;
          stack.push_back(vtx);
        }
    }
    ++count;
  }
  return count;
}

void consensus_run(Mat& state, const Mat& W, int rounds, int lambda_cols) {
  if (state.rows() != W.rows()) throw DomainError("consensus: node count mismatch");
  for (int j = 0; j < rounds; ++j) state = W * state;
  if (lambda_cols > 0)
    state.leftCols(lambda_cols) = state.leftCols(lambda_cols).cwiseMax(0.0);
}

Vec primal_solve_node(const Problem& problem, int node, const Vec& ref_node,
                      const Vec& g_node, double c, int max_iters, double tol,
                      int* iters_out, const std::vector<VariableLayout::SetBlock>* cached) {
  const auto& slice = problem.layout().nodes[node];
  const auto blocks = cached ? *cached : problem.node_sets(node);
  Vec x = ref_node;
  int it = 0;
  for (; it < max_iters; ++it) {
    // gradient of the quadratic model at x, step 1/c, then project.
    Vec step = x - (g_node + c * (x - ref_node)) / c;
    for (const auto& blk : blocks) {
      int local = blk.offset - slice.offset;
      Vec seg = step.segment(local, blk.size);
      if (blk.set.kind == SetDescriptor::Kind::CappedSum) {
        int s = slice.id;
        const auto& topo = problem.topology();
        Vec phys(blk.size);
        for (int b = 0; b < blk.size; ++b) phys(b) = seg(b) * topo.links.bs_dc_cap(b, s);
        phys = project_capped_sum(phys, blk.set.lo, blk.set.hi, blk.set.total);
        for (int b = 0; b < blk.size; ++b) seg(b) = phys(b) / topo.links.bs_dc_cap(b, s);
      } else {
        seg = project_feasible(seg, blk.set);
      }
      step.segment(local, blk.size) = seg;
    }
    if (!step.allFinite())
      throw SolverError("primal solve diverged at node " + std::to_string(node));
    double mapping = c * (step - x).norm();
    if (mapping <= tol) break;
    x = std::move(step);
  }
  if (iters_out) *iters_out = it;
  return x;
}

namespace {

// Scatters per-coordinate dual-weighted gradients into a global linear term
// and per-(node,row) partial dots for the dual updates.
struct NodeIndex {
  std::vector<int> coord_node;
  explicit NodeIndex(const Problem& p) {
    coord_node.resize(p.dim());
    for (int node = 0; node < p.num_nodes(); ++node) {
      const auto& s = p.layout().nodes[node];
      for (int k = 0; k < s.dim; ++k) coord_node[s.offset + k] = node;
    }
  }
};

}  // namespace

PdResult pd_solve(const Problem& problem, const SurrogateRef& s, const SolverConfig& cfg,
                  const Mat* duals_init) {
  const int V = problem.num_nodes();
  const int mC = problem.num_constraints();
  const int mE = problem.num_equalities();
  const auto& layout = problem.layout();
  const StructuredGrads& G = s.c_grad;
  NodeIndex nindex(problem);

  // Dual copies, one column per node; Lambda rows on top.
  Mat duals = Mat::Zero(mC + mE, V);
  if (duals_init && duals_init->rows() == mC + mE && duals_init->cols() == V)
    duals = *duals_init;
  auto lam = [&](int r, int node) -> double& { return duals(r, node); };

  // J synchronous consensus rounds collapse to one multiplication by W^J;
  // centralized mode replaces them with the exact network average.
  Mat mix;
  if (cfg.centralized) {
    mix = Mat::Constant(V, V, 1.0 / V);
  } else {
    Mat W = build_consensus_weights(problem.topology().consensus_adjacency, cfg.consensus_z);
    mix = Mat::Identity(V, V);
    for (int j = 0; j < cfg.consensus_rounds; ++j) mix = W * mix;
  }
  Mat mix_t = mix.transpose();

  std::vector<std::vector<VariableLayout::SetBlock>> node_blocks(V);
  for (int node = 0; node < V; ++node) node_blocks[node] = problem.node_sets(node);

  const int n_groups = static_cast<int>(G.dc_base.size());
  const int rpg = G.dc_rows_per_group;

  Vec w_hat = s.w_ref;
  PdResult res;
  Vec g(problem.dim());
  Mat duals_prev;

  for (int i = 0; i < cfg.pd_max_iters; ++i) {
    // --- primal: linear term of each node's partial Lagrangian ---
    g = s.j_grad;
    for (int r = 0; r < mC; ++r) {
      if (G.is_dc_row(r)) continue;
      const auto& row = G.generic[r];
      for (std::size_t k = 0; k < row.idx.size(); ++k) {
        int coord = row.idx[k];
        g(coord) += lam(r, nindex.coord_node[coord]) * row.val[k];
      }
    }
    for (int grp = 0; grp < n_groups; ++grp) {
      int node = G.dc_group_node[grp];
      int first = G.dc_first + grp * rpg;
      double weight = 0.0;
      for (int r = first; r < first + rpg; ++r) weight += lam(r, node);
      if (weight != 0.0) {
        const auto& base = G.dc_base[grp];
        for (std::size_t k = 0; k < base.idx.size(); ++k)
          g(base.idx[k]) += weight * base.val[k];
      }
      for (int r = first; r < first + rpg; ++r) {
        double lr = lam(r, node);
        if (lr == 0.0) continue;
        for (const auto& [coord, val] : G.dc_extra[r - G.dc_first]) g(coord) += lr * val;
      }
    }
    for (int e = 0; e < mE; ++e) {
      const auto& row = problem.equality_rows()[e];
      for (std::size_t k = 0; k < row.idx.size(); ++k) {
        int coord = row.idx[k];
        g(coord) += duals(mC + e, nindex.coord_node[coord]) * row.val[k];
      }
    }

    for (int node = 0; node < V; ++node) {
      const auto& slice = layout.nodes[node];
      double c = cfg.lambda1 + s.curvature.dot(duals.col(node).head(mC));
      Vec ref_node = s.w_ref.segment(slice.offset, slice.dim);
      Vec g_node = g.segment(slice.offset, slice.dim);
      Vec x = primal_solve_node(problem, node, ref_node, g_node, c, cfg.primal_max_iters,
                                cfg.primal_tol, nullptr, &node_blocks[node]);
      w_hat.segment(slice.offset, slice.dim) = x;
    }

    // --- dual: local ascent at every node ---
    Vec delta = w_hat - s.w_ref;
    Vec nsq(V);
    for (int node = 0; node < V; ++node) {
      const auto& slice = layout.nodes[node];
      nsq(node) = delta.segment(slice.offset, slice.dim).squaredNorm();
    }
    duals_prev = duals;

    if (cfg.surrogate_dual_residuals) {
      // Literal rule: ascend on the surrogate residuals, split per node.
      duals.topRows(mC).colwise() += (cfg.kappa / V) * s.c_ref;
      for (int node = 0; node < V; ++node)
        duals.col(node).head(mC) += (0.5 * cfg.kappa * nsq(node)) * s.curvature;
      for (int r = 0; r < mC; ++r) {
        if (G.is_dc_row(r)) continue;
        const auto& row = G.generic[r];
        for (std::size_t k = 0; k < row.idx.size(); ++k) {
          int coord = row.idx[k];
          lam(r, nindex.coord_node[coord]) += cfg.kappa * row.val[k] * delta(coord);
        }
      }
      for (int grp = 0; grp < n_groups; ++grp) {
        int node = G.dc_group_node[grp];
        int first = G.dc_first + grp * rpg;
        double base_dot = G.dc_base[grp].dot(delta);
        for (int r = first; r < first + rpg; ++r) {
          double dot = base_dot;
          for (const auto& [coord, val] : G.dc_extra[r - G.dc_first])
            dot += val * delta(coord);
          lam(r, node) += cfg.kappa * dot;
        }
      }
    } else {
      // Ascend on the true constraint residuals at the primal iterate, split
      // uniformly; complementarity then targets C(w_hat) <= 0 itself.
      Vec c_true = problem.constraint_values(w_hat);
      duals.topRows(mC).colwise() += (cfg.kappa / V) * c_true;
    }
    for (int e = 0; e < mE; ++e) {
      const auto& row = problem.equality_rows()[e];
      for (std::size_t k = 0; k < row.idx.size(); ++k) {
        int coord = row.idx[k];
        duals(mC + e, nindex.coord_node[coord]) += cfg.epsilon * row.val[k] * w_hat(coord);
      }
      duals(mC + e, problem.equality_anchor()[e]) -=
          cfg.epsilon * problem.equality_rhs()(e);
    }

    // --- consensus (or exact averaging) and multiplier projection ---
    duals = (duals * mix_t).eval();
    duals.topRows(mC) = duals.topRows(mC).cwiseMax(0.0);

    res.iters = i + 1;
    double change = (duals - duals_prev).cwiseAbs().maxCoeff();
    if (change <= cfg.pd_tol) {
      res.converged = true;
      break;
    }
  }

  res.w_hat = std::move(w_hat);
  res.duals = std::move(duals);
  return res;
}

DecisionVector restore_decision(const Problem& problem, DecisionVector v) {
  const Topology& topo = problem.topology();
  const auto& layout = problem.layout();
  const int N = topo.num_ues(), B = topo.num_bss(), S = topo.num_dcs();
  for (int n = 0; n < N; ++n) {
    v.rho_ue_bs.row(n) = project_simplex_le(v.rho_ue_bs.row(n).transpose(), 1.0).transpose();
    v.i_ue_bs.row(n) = project_simplex_eq(v.i_ue_bs.row(n).transpose(), 1.0).transpose();
    v.i_bs_ue.col(n) = project_simplex_eq(v.i_bs_ue.col(n), 1.0);
    const auto& ue = topo.ue_profiles[n];
    v.f(n) = std::clamp(v.f(n), ue.f_min, ue.f_max);
  }
  for (int b = 0; b < B; ++b)
    v.rho_bs_dc.row(b) = project_simplex_eq(v.rho_bs_dc.row(b).transpose(), 1.0).transpose();
  v.i_dc = project_simplex_eq(v.i_dc, 1.0);
  for (int s = 0; s < S; ++s) {
    const auto& dc = topo.dc_profiles[s];
    double z_floor = layout.z_floor_frac * dc.machine_capacity;
    v.z(s) = std::clamp(v.z(s), z_floor, dc.machine_capacity);
    Vec lo(B), hi(B);
    for (int b = 0; b < B; ++b) {
      lo(b) = layout.r_floor_frac * topo.links.bs_dc_cap(b, s);
      hi(b) = topo.links.bs_dc_cap(b, s);
    }
    v.r_bs_dc.col(s) = project_capped_sum(v.r_bs_dc.col(s), lo, hi, dc.ingress_cap);
  }
  for (int i = 0; i < N + S; ++i) {
    v.gamma(i) = std::clamp(v.gamma(i), 0.0, layout.gamma_cap);
    v.m(i) = std::clamp(v.m(i), 0.0, 1.0);
  }
  v.delta_a = std::max(v.delta_a, 0.0);
  v.delta_r = std::max(v.delta_r, 0.0);
  return v;
}

double binary_residual(const DecisionVector& v) {
  double acc = 0.0;
  for (int s = 0; s < v.i_dc.size(); ++s) acc += v.i_dc(s) * (1.0 - v.i_dc(s));
  for (int n = 0; n < v.i_ue_bs.rows(); ++n)
    for (int b = 0; b < v.i_ue_bs.cols(); ++b)
      acc += v.i_ue_bs(n, b) * (1.0 - v.i_ue_bs(n, b));
  for (int b = 0; b < v.i_bs_ue.rows(); ++b)
    for (int n = 0; n < v.i_bs_ue.cols(); ++n)
      acc += v.i_bs_ue(b, n) * (1.0 - v.i_bs_ue(b, n));
  return acc;
}

SolveResult sca_solve(Problem& problem, const SolverConfig& cfg, const Vec* warm_start) {
  int max_deg = 0;
  {
    const auto& adj = problem.topology().consensus_adjacency;
    for (int i = 0; i < adj.rows(); ++i) {
      int deg = 0;
      for (int j = 0; j < adj.cols(); ++j) deg += adj(i, j) != 0;
      max_deg = std::max(max_deg, deg);
    }
  }
  cfg.validate(max_deg);

  // Curvature must be calibrated before the first surrogate is built.
  if ((problem.curvature().array() == 1.0).all()) {
    Rng rng(cfg.curvature_seed);
    problem.estimate_curvature(rng, cfg.curvature_samples);
  }

  Vec w = warm_start ? *warm_start
                     : problem.layout().pack(problem.initial_point(), problem.topology());
  SolveResult out;
  SolveTrace& trace = out.trace;

  double j_prev = problem.objective(w);
  Mat dual_state;
  for (int l = 0; l < cfg.sca_max_iters; ++l) {
    trace.objective.push_back(j_prev);
    {
      DecisionVector v = problem.layout().unpack(w, problem.topology());
      trace.binary_residual.push_back(binary_residual(v));
    }

    SurrogateRef s = build_surrogate(problem, w);
    const Mat* warm_duals =
        cfg.dual_warm_start && dual_state.size() > 0 ? &dual_state : nullptr;
    PdResult pd = pd_solve(problem, s, cfg, warm_duals);
    if (cfg.dual_warm_start) dual_state = pd.duals;
    trace.pd_iters_total += pd.iters;
    if (!pd.converged && trace.warning.empty())
      trace.warning = "primal-dual loop hit its iteration cap";

    Vec w_next = w + cfg.sca_step * (pd.w_hat - w);
    double j_next = problem.objective(w_next);
    if (j_next > j_prev + 1e-8 * std::max(1.0, std::abs(j_prev))) {
      trace.monotone = false;
      if (trace.warning.empty())
        trace.warning = "objective increased; surrogate majorization suspect";
    }
    double move = (w_next - w).cwiseAbs().maxCoeff();
    w = std::move(w_next);
    j_prev = j_next;
    trace.sca_iters = l + 1;
    if (move <= cfg.sca_tol) {
      trace.converged = true;
      break;
    }
  }
  trace.objective.push_back(j_prev);

  out.w_final = w;
  out.solution = problem.layout().unpack(w, problem.topology());
  out.objective_value = j_prev;
  return out;
}

SolveResult centralized_solve(Problem& problem, const SolverConfig& cfg,
                              const Vec* warm_start) {
  SolverConfig c = cfg;
  c.centralized = true;
  return sca_solve(problem, c, warm_start);
}

DecisionVector recover_integers(const Problem& problem, const DecisionVector& relaxed,
                                const SolverConfig& cfg) {
  const int N = static_cast<int>(relaxed.i_ue_bs.rows());
  const int B = static_cast<int>(relaxed.i_ue_bs.cols());
  const int S = static_cast<int>(relaxed.i_dc.size());
  DecisionVector v = relaxed;

  auto argmax = [](const Vec& x) {
    int best = 0;
    for (int i = 1; i < x.size(); ++i)
      if (x(i) > x(best)) best = i;
    return best;
  };
  v.i_dc.setZero();
  v.i_dc(argmax(relaxed.i_dc)) = 1.0;
  v.i_ue_bs.setZero();
  v.i_bs_ue.setZero();
  for (int n = 0; n < N; ++n) {
    Vec up(B), down(B);
    for (int b = 0; b < B; ++b) {
      up(b) = relaxed.i_ue_bs(n, b);
      down(b) = relaxed.i_bs_ue(b, n);
    }
    v.i_ue_bs(n, argmax(up)) = 1.0;
    v.i_bs_ue(argmax(down), n) = 1.0;
  }

  // Continuous polish with the indicators frozen.
  Problem frozen = problem;
  frozen.freeze_indicators(v);
  SolverConfig polish = cfg;
  polish.sca_max_iters = std::max(2, cfg.sca_max_iters / 6);
  Vec warm = frozen.layout().pack(v, frozen.topology());
  warm = frozen.project_node_sets(warm);
  SolveResult refined = sca_solve(frozen, polish, &warm);
  DecisionVector out = refined.solution;
  out.i_dc = v.i_dc;
  out.i_ue_bs = v.i_ue_bs;
  out.i_bs_ue = v.i_bs_ue;
  out = restore_decision(problem, std::move(out));

  // Tightest feasible delay variables for the rounded plan.
  OffloadPlan plan{out.rho_ue_bs, out.rho_bs_dc, problem.ue_data()};
  MlSettings ml{out.gamma, out.m, out.f, out.z};
  AggregationIndicators ind{out.i_dc, out.i_ue_bs, out.i_bs_ue};
  CostLedger led = round_cost(problem.topology(), plan, ind, ml, &out.r_bs_dc);
  out.delta_a = led.agg_delay;
  out.delta_r = led.recv_delay;
  return out;
}

}  // namespace cefl
