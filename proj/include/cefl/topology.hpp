#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cefl/common.hpp"
#include "cefl/csv.hpp"
#include "cefl/toml_lite.hpp"

namespace cefl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct UeProfile {
  double cycles_per_point = 300.0;   // c_n
  double chipset_alpha = 2e-16;      // alpha_n (effective capacitance is alpha/2)
  double f_min = 1e5;                // Hz
  double f_max = 2.3e9;              // Hz
};

struct BsProfile {
  double tx_power = 10.0;  // P_b, broadcast transmit power (W)
};

struct DcProfile {
  int machine_count = 700;              // M_s
  double machine_capacity = 5e6;        // C_s, points/s
  double peak_power = 200.0;            // P_bar_s (W) per machine
  double dynamic_power_fraction = 0.4;  // rho: dynamic share, (1-rho) idle share
  double ingress_cap = 45e9;            // R_s^max (bps)
};

// Realized per-round link rates and per-link transmit powers. A zero rate
// means the link is unusable for positive volume.
struct LinkRateTable {
  Mat ue_bs_rate;   // N x B, R_{n,b}
  Mat ue_bs_power;  // N x B, P_{n,b}
  Mat bs_ue_rate;   // B x N, R_{b,n}
  Mat bs_dc_rate;   // B x S, deployed R_{b,s}
  Mat bs_dc_cap;    // B x S, R^max_{b,s}
  Mat bs_dc_power;  // B x S, P_{b,s}
  Mat dc_dc_rate;   // S x S, R_{s,s'}; diagonal unused (self-link is free)
  Mat dc_dc_power;  // S x S
  Mat dc_bs_rate;   // S x B, R_{s,b}
  Mat dc_bs_power;  // S x B
};

// Normal(mean, std) statistics per link, as loaded from the network CSV.
struct LinkStats {
  Mat ue_bs_mean, ue_bs_std;
  Mat bs_ue_mean, bs_ue_std;
  Mat bs_dc_mean, bs_dc_std;
  Mat dc_dc_mean, dc_dc_std;
  Mat dc_bs_mean, dc_bs_std;
};

class Topology {
 public:
  std::vector<UeProfile> ue_profiles;
  std::vector<BsProfile> bs_profiles;
  std::vector<DcProfile> dc_profiles;

  LinkStats link_stats;
  LinkRateTable links;  // current realization

  Eigen::MatrixXi consensus_adjacency;  // (N+B+S) square, symmetric 0/1

  // Sub-network membership used by the datapoint-greedy aggregator rule.
  std::vector<int> ue_subnet;  // per UE, index of owning DC
  std::vector<int> bs_subnet;  // per BS

  double n0 = 4e-21;        // noise spectral density W/Hz
  double beta_data = 4e7;   // bits per data point
  double beta_model = 6272; // bits per scaled accumulated gradient vector

  int num_ues() const { return static_cast<int>(ue_profiles.size()); }
  int num_bss() const { return static_cast<int>(bs_profiles.size()); }
  int num_dcs() const { return static_cast<int>(dc_profiles.size()); }
  int num_nodes() const { return num_ues() + num_bss() + num_dcs(); }
  int num_dpus() const { return num_ues() + num_dcs(); }

  // Global node ids: UEs [0,N), BSs [N,N+B), DCs [N+B,N+B+S).
  int node_of_ue(int n) const { return n; }
  int node_of_bs(int b) const { return num_ues() + b; }
  int node_of_dc(int s) const { return num_ues() + num_bss() + s; }

  // Draws the round-t rate realization from the link statistics (truncated at
  // zero). Powers and caps are static.
  void realize_rates(std::uint64_t master_seed, int round);

  // Validates the graph rules and positivity invariants; throws SetupError.
  void validate() const;

  // Network dataset CSV (one row per directed link) and profile TOML.
  CsvTable links_to_csv() const;
  void links_from_csv(const CsvTable& table);
  TomlDoc profiles_to_toml() const;
  void profiles_from_toml(const TomlDoc& doc);

  void save(const std::string& csv_path, const std::string& toml_path) const;
  static Topology load(const std::string& csv_path, const std::string& toml_path);
};

// Shannon-style rate formulas, Eq.-level building blocks.
double uplink_rate(double bandwidth_hz, double tx_power_w, double gain, double n0);
double downlink_rate(double bs_bandwidth_hz, double bs_power_w, double gain, double n0);

}  // namespace cefl
