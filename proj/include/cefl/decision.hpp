#pragma once

#include <vector>

#include "cefl/projection.hpp"
#include "cefl/topology.hpp"

namespace cefl {

// The physical per-round orchestration variables of the network problem.
struct DecisionVector {
  Mat rho_ue_bs;  // N x B
  Mat rho_bs_dc;  // B x S
  Vec f;          // N, UE CPU frequency (Hz)
  Vec z;          // S, DC machine speed (points/s)
  Vec gamma;      // N+S, SGD iterations (continuous in the solver)
  Vec m;          // N+S, mini-batch ratios
  Vec i_dc;       // S, aggregator indicator (relaxed in the solver)
  Mat i_ue_bs;    // N x B, uplink association
  Mat i_bs_ue;    // B x N, downlink association
  double delta_a = 0.0;
  double delta_r = 0.0;
  Mat r_bs_dc;    // B x S, deployed BS->DC rates (bps)

  static DecisionVector zeros(int N, int B, int S);
};

enum class NodeKind { Ue, Bs, Dc };

// One node's slice of the expanded solver vector. Shared variables appear as
// local copies: UEs carry their offload row, the aggregator vector and the
// aggregation delay; BSs carry their incident offload column/row, both delays
// and their rate row; DCs carry all UE-BS pairs, their offload and rate
// columns and both delays. Local-only variables (f, z, gamma, m, the
// association indicators) live at a single node.
struct NodeSlice {
  NodeKind kind{};
  int id = 0;
  int offset = 0;  // into the expanded vector
  int dim = 0;
};

// Coordinate bookkeeping between the expanded (scaled) solver space, the
// per-node slices, and the physical variable space.
class VariableLayout {
 public:
  VariableLayout(const Topology& topo, double gamma_cap = 50.0, double delta_scale = 10.0,
                 double delta_max = 1000.0, double r_floor_frac = 0.1,
                 double z_floor_frac = 1e-3);

  int N, B, S;
  int total_dim = 0;
  std::vector<NodeSlice> nodes;  // N + B + S slices, UEs then BSs then DCs

  double gamma_cap;     // numeric guard on the gamma box
  double gamma_scale;   // scaled gamma = gamma / gamma_scale
  double delta_scale;   // scaled delay = delay / delta_scale
  double delta_max;     // upper box for delays (seconds)
  double r_floor_frac;  // lower box for deployed rates, fraction of the cap
  double z_floor_frac;  // lower box for DC speed, fraction of C_s

  // Expanded coordinate indices (global).
  int ue_rho(int n, int b) const { return nodes[n].offset + b; }
  int ue_iub(int n, int b) const { return nodes[n].offset + B + b; }
  int ue_is(int n, int s) const { return nodes[n].offset + 2 * B + s; }
  int ue_da(int n) const { return nodes[n].offset + 2 * B + S; }
  int ue_u(int n) const { return nodes[n].offset + 2 * B + S + 1; }  // f_min/f
  int ue_gamma(int n) const { return nodes[n].offset + 2 * B + S + 2; }
  int ue_m(int n) const { return nodes[n].offset + 2 * B + S + 3; }

  int bs_rho_ue(int b, int n) const { return nodes[N + b].offset + n; }
  int bs_rho_dc(int b, int s) const { return nodes[N + b].offset + N + s; }
  int bs_ibu(int b, int n) const { return nodes[N + b].offset + N + S + n; }
  int bs_is(int b, int s) const { return nodes[N + b].offset + 2 * N + S + s; }
  int bs_da(int b) const { return nodes[N + b].offset + 2 * N + 2 * S; }
  int bs_dr(int b) const { return nodes[N + b].offset + 2 * N + 2 * S + 1; }
  int bs_r(int b, int s) const { return nodes[N + b].offset + 2 * N + 2 * S + 2 + s; }

  int dc_rho_ue(int s, int n, int b) const { return nodes[N + B + s].offset + n * B + b; }
  int dc_rho_dc(int s, int b) const { return nodes[N + B + s].offset + N * B + b; }
  int dc_is(int s, int s2) const { return nodes[N + B + s].offset + N * B + B + s2; }
  int dc_da(int s) const { return nodes[N + B + s].offset + N * B + B + S; }
  int dc_dr(int s) const { return nodes[N + B + s].offset + N * B + B + S + 1; }
  int dc_r(int s, int b) const { return nodes[N + B + s].offset + N * B + B + S + 2 + b; }
  int dc_v(int s) const { return nodes[N + B + s].offset + N * B + 2 * B + S + 2; }  // z floor / z
  int dc_gamma(int s) const { return nodes[N + B + s].offset + N * B + 2 * B + S + 3; }
  int dc_m(int s) const { return nodes[N + B + s].offset + N * B + 2 * B + S + 4; }

  // All expanded copies of each shared physical variable.
  std::vector<int> copies_rho_ue(int n, int b) const;
  std::vector<int> copies_rho_dc(int b, int s) const;
  std::vector<int> copies_is(int s) const;
  std::vector<int> copies_da() const;
  std::vector<int> copies_dr() const;
  std::vector<int> copies_r(int b, int s) const;

  // Mean of the listed copies.
  static double mean_of(const Vec& w, const std::vector<int>& idx);

  // Physical <-> expanded conversion. pack sets all copies consistently;
  // unpack averages copies and undoes the coordinate transforms.
  Vec pack(const DecisionVector& v, const Topology& topo) const;
  DecisionVector unpack(const Vec& w, const Topology& topo) const;

  // Per-node feasible set: coordinate spans plus their set descriptors, in
  // the scaled coordinates.
  struct SetBlock {
    int offset;  // global expanded offset
    int size;
    SetDescriptor set;
  };
  std::vector<SetBlock> node_sets(const Topology& topo, int node) const;

  // Uniform sample inside the per-node sets (projection of a box sample).
  Vec sample_feasible(const Topology& topo, Rng& rng) const;
  // Projection of an arbitrary vector onto the product of per-node sets.
  Vec project_node_sets(const Topology& topo, const Vec& w) const;
};

}  // namespace cefl
