#pragma once

#include <string>
#include <vector>

#include "cefl/csv.hpp"
#include "cefl/solver.hpp"

namespace cefl {

struct NetworkGenConfig {
  int sub_networks = 5;
  int ues_per = 4;
  int bss_per = 2;
  double rate_std_frac = 0.1;   // per-link std as a fraction of the mean
  double edge_probability = 0.8;  // consensus graph density
};

// Sub-network structured topology: high intra-subnet rates, low inter-subnet
// rates, ingress caps in [40,50] Gbps and per-link caps in [3,4] Gbps.
Topology generate_network(const NetworkGenConfig& cfg, Rng& rng);

struct DriftSchedule {
  std::string kind = "none";  // none | rotate
  double hot_multiplier = 3.0;
  int period = 1;  // rounds each sub-network stays hot
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int rounds = 10;
  NetworkGenConfig network;
  std::string network_csv;   // optional: load instead of generating
  std::string network_toml;
  std::string ml_task = "logistic";
  SyntheticTaskConfig task;
  MlHyperParams hp;
  ObjectiveWeights weights;
  SolverConfig solver;
  DriftSchedule drift;
  double data_mean = 2000.0;
  double data_std = 200.0;
  int data_cap = 2500;
  int estimation_points = 64;
  int estimation_J = 8;
  int drift_probes = 16;
  bool dynamic_estimation = false;
  double default_delta = 0.3;
  int test_points = 2000;
  bool use_integer_recovery = true;
  std::string out_dir = ".";

  static ExperimentConfig from_toml(const TomlDoc& doc);
  TomlDoc to_toml() const;
};

struct MetricsRow {
  int round = 0;
  int aggregator_id = 0;
  double global_loss = 0.0;
  double test_acc = 0.0;
  double delta_a = 0.0;
  double delta_r = 0.0;
  double energy_total = 0.0;
  double energy_data = 0.0;  // objective term (c)
  double energy_proc = 0.0;  // term (d)
  double energy_agg = 0.0;   // term (e)
  double objective_value = 0.0;
  double avg_gamma = 0.0;
  double avg_m = 0.0;
  double avg_f = 0.0;
};

struct MetricsTable {
  std::string method;
  std::vector<MetricsRow> rows;

  CsvTable to_csv() const;
  static MetricsTable from_csv(const std::string& method, const CsvTable& csv);
};

// Baseline plan construction: the standard recipe with the aggregator (and,
// for the uniform baselines, the offloading) overridden.
enum class BaselineKind {
  FednovaUniform,
  FedavgUniform,
  FixedAggregator,
  GreedyDatapoints,
  GreedyRate,
};
BaselineKind baseline_kind_from_name(const std::string& name);
std::string baseline_name(BaselineKind kind);

DecisionVector make_baseline_decision(const Problem& problem, BaselineKind kind,
                                      int fixed_aggregator = 0);

MetricsTable run_cefl(const ExperimentConfig& cfg);
MetricsTable run_baseline(const ExperimentConfig& cfg, BaselineKind kind,
                          int fixed_aggregator = 0);

struct SavingsRow {
  std::string baseline;
  double target_accuracy = 0.0;
  std::string metric;  // "energy" or "delay"
  double cefl_value = 0.0;
  double baseline_value = 0.0;
  double savings_pct = 0.0;  // 100 * (1 - cefl/baseline)
};

// Cumulative energy/delay to reach each target accuracy (linear interpolation
// between logged rounds) and the percentage savings of the first table.
std::vector<SavingsRow> compare(const MetricsTable& cefl,
                                const std::vector<MetricsTable>& baselines,
                                const std::vector<double>& target_accuracies);

void emit_metrics(const std::vector<MetricsTable>& tables, const std::string& dir);

// Quick property sweep used by the CLI selftest subcommand.
bool selftest(std::uint64_t seed = 7);

}  // namespace cefl
