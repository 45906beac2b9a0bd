#include "cefl/network_model.hpp"

#include <cmath>

namespace cefl {

void OffloadPlan::validate(double tol) const {
  const auto N = rho_ue_bs.rows();
  if (initial_ue_data.size() != N)
    throw ConstraintError("offload plan: initial data size mismatch");
  if (rho_ue_bs.minCoeff() < -tol || rho_ue_bs.maxCoeff() > 1.0 + tol ||
      rho_bs_dc.minCoeff() < -tol || rho_bs_dc.maxCoeff() > 1.0 + tol)
    throw ConstraintError("offload plan: rho out of [0,1]");
  for (Eigen::Index n = 0; n < N; ++n)
    if (rho_ue_bs.row(n).sum() > 1.0 + tol)
      throw ConstraintError("offload plan: UE " + std::to_string(n) +
                            " offload ratios sum above 1");
  for (Eigen::Index b = 0; b < rho_bs_dc.rows(); ++b)
    if (std::abs(rho_bs_dc.row(b).sum() - 1.0) > tol)
      throw ConstraintError("offload plan: BS " + std::to_string(b) +
                            " dispersion ratios must sum to 1");
}

DataConfiguration apply_offload_plan(const OffloadPlan& plan) {
  plan.validate();
  DataConfiguration cfg;
  const auto N = plan.rho_ue_bs.rows();
  const auto B = plan.rho_ue_bs.cols();
  const auto S = plan.rho_bs_dc.cols();
  cfg.ue_bs.resize(N, B);
  cfg.ue_kept.resize(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    cfg.ue_bs.row(n) = plan.initial_ue_data(n) * plan.rho_ue_bs.row(n);
    cfg.ue_kept(n) = (1.0 - plan.rho_ue_bs.row(n).sum()) * plan.initial_ue_data(n);
  }
  cfg.bs_total = cfg.ue_bs.colwise().sum().transpose();
  cfg.bs_dc.resize(B, S);
  for (Eigen::Index b = 0; b < B; ++b)
    cfg.bs_dc.row(b) = cfg.bs_total(b) * plan.rho_bs_dc.row(b);
  cfg.dc_total = cfg.bs_dc.colwise().sum().transpose();
  cfg.total = plan.initial_ue_data.sum();
  return cfg;
}

namespace {

Cost hop_cost(double bits, double rate, double power) {
  if (bits == 0.0) return {0.0, 0.0};
  if (rate <= 0.0)
    throw InfeasibleLinkError("positive volume over a zero-rate link");
  double delay = bits / rate;
  return {delay, delay * power};
}

}  // namespace

Cost transfer_cost(const Topology& topo, TransferKind kind, Hop hop, int src, int dst,
                   double volume_points) {
  double bits = kind == TransferKind::Data ? topo.beta_data * volume_points
                                           : topo.beta_model;
  switch (hop) {
    case Hop::UeBs:
      return hop_cost(bits, topo.links.ue_bs_rate(src, dst),
                      topo.links.ue_bs_power(src, dst));
    case Hop::BsDc:
      return hop_cost(bits, topo.links.bs_dc_rate(src, dst),
                      topo.links.bs_dc_power(src, dst));
    case Hop::DcDc:
      if (src == dst) return {0.0, 0.0};
      return hop_cost(bits, topo.links.dc_dc_rate(src, dst),
                      topo.links.dc_dc_power(src, dst));
    case Hop::DcBs:
      return hop_cost(bits, topo.links.dc_bs_rate(src, dst),
                      topo.links.dc_bs_power(src, dst));
  }
  throw DomainError("transfer_cost: bad hop");
}

Cost ue_processing_cost(const UeProfile& ue, double data_points, double gamma, double m,
                        double f) {
  if (f < ue.f_min - 1e-9 || f > ue.f_max + 1e-9)
    throw ConstraintError("UE frequency outside [f_min, f_max]");
  if (m <= 0.0 || m > 1.0 + 1e-12) throw ConstraintError("mini-batch ratio outside (0,1]");
  if (gamma < 0.0) throw ConstraintError("negative SGD iteration count");
  double work = ue.cycles_per_point * gamma * m * data_points;
  double delay = work / f;
  double energy = 0.5 * ue.chipset_alpha * work * f * f;
  return {delay, energy};
}

Cost dc_processing_cost(const DcProfile& dc, double data_points, double gamma, double m,
                        double z) {
  if (z <= 0.0 || z > dc.machine_capacity + 1e-9)
    throw ConstraintError("DC machine speed outside (0, C_s]");
  if (m <= 0.0 || m > 1.0 + 1e-12) throw ConstraintError("mini-batch ratio outside (0,1]");
  if (gamma < 0.0) throw ConstraintError("negative SGD iteration count");
  double delay = gamma * m * data_points / (dc.machine_count * z);
  double util = z / dc.machine_capacity;
  double rho = dc.dynamic_power_fraction;
  double power = (rho * util * util + (1.0 - rho)) * dc.peak_power * dc.machine_count;
  return {delay, delay * power};
}

Vec dc_data_collect_delay(const Mat& ue_bs_data_delay, const Mat& bs_dc_data_delay) {
  const auto S = bs_dc_data_delay.cols();
  double ue_max = ue_bs_data_delay.size() > 0 ? ue_bs_data_delay.maxCoeff() : 0.0;
  Vec out(S);
  for (Eigen::Index s = 0; s < S; ++s)
    out(s) = bs_dc_data_delay.col(s).maxCoeff() + ue_max;
  return out;
}

CostLedger round_cost(const Topology& topo, const OffloadPlan& plan,
                      const AggregationIndicators& ind, const MlSettings& ml,
                      const Mat* rbs) {
  const int N = topo.num_ues(), B = topo.num_bss(), S = topo.num_dcs();
  const double tol = 1e-9;
  if (std::abs(ind.i_dc.sum() - 1.0) > tol)
    throw ConstraintError("round_cost: aggregator indicators must sum to 1");
  for (int n = 0; n < N; ++n) {
    if (std::abs(ind.i_ue_bs.row(n).sum() - 1.0) > tol)
      throw ConstraintError("round_cost: UE uplink association must sum to 1");
    if (std::abs(ind.i_bs_ue.col(n).sum() - 1.0) > tol)
      throw ConstraintError("round_cost: UE downlink association must sum to 1");
  }

  const Mat& bs_dc_rate = rbs ? *rbs : topo.links.bs_dc_rate;
  DataConfiguration data = apply_offload_plan(plan);
  CostLedger led;

  // Data transfer legs.
  led.ue_bs_data_delay = Mat::Zero(N, B);
  led.ue_bs_data_energy = Mat::Zero(N, B);
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) {
      double bits = topo.beta_data * data.ue_bs(n, b);
      if (bits == 0.0) continue;
      double r = topo.links.ue_bs_rate(n, b);
      if (r <= 0.0) throw InfeasibleLinkError("UE->BS offload over dead link");
      led.ue_bs_data_delay(n, b) = bits / r;
      led.ue_bs_data_energy(n, b) = led.ue_bs_data_delay(n, b) * topo.links.ue_bs_power(n, b);
    }
  led.bs_dc_data_delay = Mat::Zero(B, S);
  led.bs_dc_data_energy = Mat::Zero(B, S);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      double bits = topo.beta_data * data.bs_dc(b, s);
      if (bits == 0.0) continue;
      double r = bs_dc_rate(b, s);
      if (r <= 0.0) throw InfeasibleLinkError("BS->DC offload over dead link");
      led.bs_dc_data_delay(b, s) = bits / r;
      led.bs_dc_data_energy(b, s) = led.bs_dc_data_delay(b, s) * topo.links.bs_dc_power(b, s);
    }
  led.dc_data_collect_delay = dc_data_collect_delay(led.ue_bs_data_delay, led.bs_dc_data_delay);

  // Processing at DPUs.
  led.dpu_proc_delay = Vec::Zero(N + S);
  led.dpu_proc_energy = Vec::Zero(N + S);
  for (int n = 0; n < N; ++n) {
    Cost c = ue_processing_cost(topo.ue_profiles[n], data.ue_kept(n), ml.gamma(n), ml.m(n),
                                ml.f(n));
    led.dpu_proc_delay(n) = c.delay;
    led.dpu_proc_energy(n) = c.energy;
  }
  for (int s = 0; s < S; ++s) {
    Cost c = dc_processing_cost(topo.dc_profiles[s], data.dc_total(s), ml.gamma(N + s),
                                ml.m(N + s), ml.z(s));
    led.dpu_proc_delay(N + s) = c.delay;
    led.dpu_proc_energy(N + s) = c.energy;
  }

  // Gradient transfer to the aggregation DC. Model transfers over BS->DC use
  // the same deployed rates as data.
  led.ue_agg_delay = Vec::Zero(N);
  led.ue_agg_energy = Vec::Zero(N);
  for (int n = 0; n < N; ++n) {
    for (int b = 0; b < B; ++b) {
      if (ind.i_ue_bs(n, b) == 0.0) continue;
      double r = topo.links.ue_bs_rate(n, b);
      if (r <= 0.0) throw InfeasibleLinkError("gradient upload over dead UE->BS link");
      double d = topo.beta_model / r;
      led.ue_agg_delay(n) += d * ind.i_ue_bs(n, b);
      led.ue_agg_energy(n) += d * topo.links.ue_bs_power(n, b) * ind.i_ue_bs(n, b);
      for (int s = 0; s < S; ++s) {
        if (ind.i_dc(s) == 0.0) continue;
        double rb = bs_dc_rate(b, s);
        if (rb <= 0.0) throw InfeasibleLinkError("gradient relay over dead BS->DC link");
        double db = topo.beta_model / rb;
        led.ue_agg_delay(n) += db * ind.i_dc(s) * ind.i_ue_bs(n, b);
        led.ue_agg_energy(n) +=
            db * topo.links.bs_dc_power(b, s) * ind.i_dc(s) * ind.i_ue_bs(n, b);
      }
    }
  }
  led.dc_agg_delay = Vec::Zero(S);
  led.dc_agg_energy = Vec::Zero(S);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      if (ind.i_dc(s2) == 0.0 || s == s2) continue;
      double r = topo.links.dc_dc_rate(s, s2);
      if (r <= 0.0) throw InfeasibleLinkError("gradient transfer over dead DC->DC link");
      double d = topo.beta_model / r;
      led.dc_agg_delay(s) += d * ind.i_dc(s2);
      led.dc_agg_energy(s) += d * topo.links.dc_dc_power(s, s2) * ind.i_dc(s2);
    }

  double ue_branch = 0.0;
  for (int n = 0; n < N; ++n)
    ue_branch = std::max(ue_branch, led.ue_agg_delay(n) + led.dpu_proc_delay(n));
  double dc_branch = 0.0;
  for (int s = 0; s < S; ++s)
    dc_branch = std::max(dc_branch, led.dc_data_collect_delay(s) + led.dpu_proc_delay(N + s) +
                                        led.dc_agg_delay(s));
  led.agg_delay = std::max(ue_branch, dc_branch);
  led.agg_energy = led.ue_agg_energy.sum() + led.dc_agg_energy.sum();

  // Parameter reception: aggregator -> DCs/BSs -> UEs broadcast.
  led.bs_recv_delay = Vec::Zero(B);
  led.bs_recv_energy = Vec::Zero(B);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      if (ind.i_dc(s) == 0.0) continue;
      double r = topo.links.dc_bs_rate(s, b);
      if (r <= 0.0) throw InfeasibleLinkError("broadcast over dead DC->BS link");
      double d = topo.beta_model / r;
      led.bs_recv_delay(b) += d * ind.i_dc(s);
      led.bs_recv_energy(b) += d * topo.links.dc_bs_power(s, b) * ind.i_dc(s);
    }
  led.bs_broadcast_delay = Vec::Zero(B);
  led.bs_broadcast_energy = Vec::Zero(B);
  for (int b = 0; b < B; ++b) {
    double worst = 0.0;
    for (int n = 0; n < N; ++n) {
      if (ind.i_bs_ue(b, n) == 0.0) continue;
      double r = topo.links.bs_ue_rate(b, n);
      if (r <= 0.0) throw InfeasibleLinkError("broadcast over dead BS->UE link");
      worst = std::max(worst, topo.beta_model / r * ind.i_bs_ue(b, n));
    }
    led.bs_broadcast_delay(b) = worst;
    led.bs_broadcast_energy(b) = worst * topo.bs_profiles[b].tx_power;
  }
  led.dc_recv_delay = Vec::Zero(S);
  led.dc_recv_energy = Vec::Zero(S);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      if (ind.i_dc(s2) == 0.0 || s == s2) continue;
      double r = topo.links.dc_dc_rate(s2, s);
      if (r <= 0.0) throw InfeasibleLinkError("reception over dead DC->DC link");
      double d = topo.beta_model / r;
      led.dc_recv_delay(s) += d * ind.i_dc(s2);
      led.dc_recv_energy(s) += d * topo.links.dc_dc_power(s2, s) * ind.i_dc(s2);
    }

  double bs_branch = 0.0;
  for (int b = 0; b < B; ++b)
    bs_branch = std::max(bs_branch, led.bs_recv_delay(b) + led.bs_broadcast_delay(b));
  led.recv_delay = std::max(bs_branch, led.dc_recv_delay.maxCoeff());
  led.recv_energy =
      led.bs_recv_energy.sum() + led.bs_broadcast_energy.sum() + led.dc_recv_energy.sum();
  return led;
}

double e2e_rate(const Topology& topo, int ue, int dc) {
  double best = 0.0;
  for (int b = 0; b < topo.num_bss(); ++b) {
    double up = topo.links.ue_bs_rate(ue, b);
    double wired = topo.links.bs_dc_cap(b, dc);
    if (up <= 0.0 || wired <= 0.0) continue;
    best = std::max(best, 1.0 / (1.0 / up + 1.0 / wired));
  }
  return best;
}

std::vector<CapacityViolation> check_capacity(const Topology& topo, const Mat& rbs,
                                              double tol) {
  std::vector<CapacityViolation> out;
  for (int b = 0; b < topo.num_bss(); ++b)
    for (int s = 0; s < topo.num_dcs(); ++s) {
      double excess = rbs(b, s) - topo.links.bs_dc_cap(b, s);
      if (excess > tol)
        out.push_back({"R(" + std::to_string(b) + "," + std::to_string(s) +
                           ") exceeds link cap",
                       excess});
    }
  for (int s = 0; s < topo.num_dcs(); ++s) {
    double excess = rbs.col(s).sum() - topo.dc_profiles[s].ingress_cap;
    if (excess > tol)
      out.push_back({"DC " + std::to_string(s) + " ingress above R_s^max", excess});
  }
  return out;
}

}  // namespace cefl
