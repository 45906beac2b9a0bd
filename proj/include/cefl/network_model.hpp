#pragma once

#include <string>
#include <vector>

#include "cefl/topology.hpp"

namespace cefl {

struct OffloadPlan {
  Mat rho_ue_bs;        // N x B, in [0,1], row sums <= 1
  Mat rho_bs_dc;        // B x S, in [0,1], row sums == 1
  Vec initial_ue_data;  // D_bar_n per UE (points)

  void validate(double tol = 1e-9) const;
};

// Point volumes after routing the plan.
struct DataConfiguration {
  Vec ue_kept;    // D_n
  Mat ue_bs;      // D_{n,b}
  Vec bs_total;   // D_b
  Mat bs_dc;      // D_{b,s}
  Vec dc_total;   // D_s
  double total = 0.0;
};

DataConfiguration apply_offload_plan(const OffloadPlan& plan);

enum class TransferKind { Data, Model };
enum class Hop { UeBs, BsDc, DcDc, DcBs };

struct Cost {
  double delay = 0.0;   // seconds
  double energy = 0.0;  // joules
};

// Delay/energy of moving `volume_points` data points (Data) or one gradient
// vector (Model) over a single hop. Self DC-DC transfer is free.
Cost transfer_cost(const Topology& topo, TransferKind kind, Hop hop, int src, int dst,
                   double volume_points);

// ML execution settings for one round, per node.
struct MlSettings {
  Vec gamma;  // N+S entries, DPU order: UEs then DCs
  Vec m;      // N+S mini-batch ratios
  Vec f;      // N entries, UE CPU frequency (Hz)
  Vec z;      // S entries, DC per-machine speed (points/s)
};

// UE processing cost, Eq.-style closed forms.
Cost ue_processing_cost(const UeProfile& ue, double data_points, double gamma, double m,
                        double f);
Cost dc_processing_cost(const DcProfile& dc, double data_points, double gamma, double m,
                        double z);

struct AggregationIndicators {
  Vec i_dc;    // S, exactly one 1 at execution time (relaxed values allowed for checks)
  Mat i_ue_bs; // N x B, row sums 1 (UE uplink association)
  Mat i_bs_ue; // B x N, column sums 1 per UE (downlink association)
};

struct CostLedger {
  // Data transfer.
  Mat ue_bs_data_delay;   // N x B
  Mat ue_bs_data_energy;  // N x B
  Mat bs_dc_data_delay;   // B x S
  Mat bs_dc_data_energy;  // B x S
  Vec dc_data_collect_delay;  // S, delta^D_s

  // Processing.
  Vec dpu_proc_delay;   // N+S
  Vec dpu_proc_energy;  // N+S

  // Gradient aggregation path.
  Vec ue_agg_delay;   // N, delta^A_n
  Vec ue_agg_energy;  // N
  Vec dc_agg_delay;   // S, delta^A_s
  Vec dc_agg_energy;  // S
  double agg_delay = 0.0;   // delta^A
  double agg_energy = 0.0;  // E^A

  // Global parameter reception path.
  Vec bs_recv_delay;      // B, delta^R_b
  Vec bs_recv_energy;     // B
  Vec bs_broadcast_delay; // B, delta^B_b
  Vec bs_broadcast_energy;// B
  Vec dc_recv_delay;      // S, delta^R_s
  Vec dc_recv_energy;     // S
  double recv_delay = 0.0;   // delta^R
  double recv_energy = 0.0;  // E^R

  double round_duration() const { return agg_delay + recv_delay; }

  double data_transfer_energy() const {
    return ue_bs_data_energy.sum() + bs_dc_data_energy.sum();
  }
  double processing_energy() const { return dpu_proc_energy.sum(); }
  double total_energy() const {
    return data_transfer_energy() + processing_energy() + agg_energy + recv_energy;
  }
};

// Full per-round cost accounting per the closed-form model. The BS-DC rates
// used are `rbs` when provided (the deployed rates chosen by the solver),
// otherwise the topology's realized rates.
CostLedger round_cost(const Topology& topo, const OffloadPlan& plan,
                      const AggregationIndicators& ind, const MlSettings& ml,
                      const Mat* rbs = nullptr);

// delta^D_s recomputed from per-hop delays (the max composition of the data
// collection path); exposed separately for testing.
Vec dc_data_collect_delay(const Mat& ue_bs_data_delay, const Mat& bs_dc_data_delay);

// Best two-hop UE->DC rate through any BS, using link caps on the wired hop.
double e2e_rate(const Topology& topo, int ue, int dc);

struct CapacityViolation {
  std::string what;
  double residual = 0.0;
};

// Flags violations of per-link caps and DC ingress caps for a deployed rate
// matrix.
std::vector<CapacityViolation> check_capacity(const Topology& topo, const Mat& rbs,
                                              double tol = 1e-9);

}  // namespace cefl
