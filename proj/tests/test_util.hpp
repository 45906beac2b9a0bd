#pragma once

#include "cefl/harness.hpp"
#include "cefl/problem.hpp"

namespace cefl::testutil {

// Small topology with every link rate and power set to fixed constants, for
// hand-computable cost checks.
inline Topology flat_topology(int N, int B, int S, double ue_bs = 4e7, double bs_dc = 1e9,
                              double dc_dc = 1e9, double dc_bs = 1e9, double bs_ue = 1e8) {
  Topology topo;
  topo.ue_profiles.assign(N, UeProfile{});
  topo.bs_profiles.assign(B, BsProfile{});
  topo.dc_profiles.assign(S, DcProfile{});
  topo.ue_subnet.assign(N, 0);
  topo.bs_subnet.assign(B, 0);
  auto& ls = topo.link_stats;
  auto fill = [](Mat& mean, Mat& stdm, int r, int c, double v) {
    mean = Mat::Constant(r, c, v);
    stdm = Mat::Zero(r, c);
  };
  fill(ls.ue_bs_mean, ls.ue_bs_std, N, B, ue_bs);
  fill(ls.bs_ue_mean, ls.bs_ue_std, B, N, bs_ue);
  fill(ls.bs_dc_mean, ls.bs_dc_std, B, S, bs_dc);
  fill(ls.dc_dc_mean, ls.dc_dc_std, S, S, dc_dc);
  fill(ls.dc_bs_mean, ls.dc_bs_std, S, B, dc_bs);
  topo.links.ue_bs_power = Mat::Constant(N, B, 0.5);
  topo.links.bs_dc_power = Mat::Constant(B, S, 10.0);
  topo.links.bs_dc_cap = Mat::Constant(B, S, 3.5e9);
  topo.links.dc_dc_power = Mat::Constant(S, S, 10.0);
  topo.links.dc_bs_power = Mat::Constant(S, B, 10.0);
  topo.realize_rates(1, 0);

  int V = N + B + S;
  topo.consensus_adjacency = Eigen::MatrixXi::Zero(V, V);
  auto edge = [&](int a, int b) {
    topo.consensus_adjacency(a, b) = 1;
    topo.consensus_adjacency(b, a) = 1;
  };
  for (int n = 0; n < N; ++n) edge(topo.node_of_ue(n), topo.node_of_bs(n % B));
  for (int b = 0; b < B; ++b) edge(topo.node_of_bs(b), topo.node_of_dc(b % S));
  for (int s = 0; s < S; ++s) edge(topo.node_of_dc(s), topo.node_of_dc((s + 1) % S));
  return topo;
}

inline BoundParams flat_bounds(int n_dpus, double theta = 1.0, double sigma_sq = 1.0,
                               double delta = 0.3) {
  BoundParams bp;
  bp.L = 2.0;
  bp.theta = Vec::Constant(n_dpus, theta);
  bp.sigma_sq = Vec::Constant(n_dpus, sigma_sq);
  bp.delta = Vec::Constant(n_dpus, delta);
  bp.initial_loss = 2.3;
  bp.f_star = 0.5;
  return bp;
}

inline Problem small_problem(int sub_networks = 2, std::uint64_t seed = 11,
                             ObjectiveWeights weights = {}) {
  NetworkGenConfig nc;
  nc.sub_networks = sub_networks;
  Rng rng = make_rng(seed, 0xB00);
  Topology topo = generate_network(nc, rng);
  Vec dbar = Vec::Constant(topo.num_ues(), 2000.0);
  return Problem(topo, dbar, flat_bounds(topo.num_dpus()), weights, MlHyperParams{});
}

}  // namespace cefl::testutil
