#include "cefl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "cefl/bound_estimator.hpp"
#include "cefl/ml_engine.hpp"

namespace cefl {

namespace {

double uniform_in(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

}  // namespace

Topology generate_network(const NetworkGenConfig& cfg, Rng& rng) {
  const int S = cfg.sub_networks;
  const int B = S * cfg.bss_per;
  const int N = S * cfg.ues_per;
  Topology topo;
  topo.ue_profiles.assign(N, UeProfile{});
  topo.bs_profiles.assign(B, BsProfile{});
  topo.dc_profiles.assign(S, DcProfile{});
  topo.ue_subnet.resize(N);
  topo.bs_subnet.resize(B);
  for (int n = 0; n < N; ++n) topo.ue_subnet[n] = n / cfg.ues_per;
  for (int b = 0; b < B; ++b) topo.bs_subnet[b] = b / cfg.bss_per;
  for (int b = 0; b < B; ++b) topo.bs_profiles[b].tx_power = uniform_in(rng, 5.0, 15.0);
  for (int s = 0; s < S; ++s)
    topo.dc_profiles[s].ingress_cap = uniform_in(rng, 40e9, 50e9);

  auto& ls = topo.link_stats;
  auto fill = [&](Mat& mean, Mat& stdm, int rows, int cols, auto intra, double lo,
                  double hi, double inter_scale) {
    mean.resize(rows, cols);
    stdm.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        double base = uniform_in(rng, lo, hi);
        if (!intra(r, c)) base *= inter_scale;
        mean(r, c) = base;
        stdm(r, c) = cfg.rate_std_frac * base;
      }
  };
  auto ue_bs_intra = [&](int n, int b) { return topo.ue_subnet[n] == topo.bs_subnet[b]; };
  auto bs_ue_intra = [&](int b, int n) { return topo.ue_subnet[n] == topo.bs_subnet[b]; };
  auto bs_dc_intra = [&](int b, int s) { return topo.bs_subnet[b] == s; };
  auto dc_bs_intra = [&](int s, int b) { return topo.bs_subnet[b] == s; };
  auto always = [](int, int) { return true; };
  fill(ls.ue_bs_mean, ls.ue_bs_std, N, B, ue_bs_intra, 1e8, 5e8, 0.1);
  fill(ls.bs_ue_mean, ls.bs_ue_std, B, N, bs_ue_intra, 2e8, 8e8, 0.1);
  fill(ls.bs_dc_mean, ls.bs_dc_std, B, S, bs_dc_intra, 1.5e9, 3e9, 0.2);
  fill(ls.dc_dc_mean, ls.dc_dc_std, S, S, always, 5e8, 2e9, 1.0);
  fill(ls.dc_bs_mean, ls.dc_bs_std, S, B, dc_bs_intra, 1e9, 3e9, 0.2);

  topo.links.ue_bs_power.resize(N, B);
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) topo.links.ue_bs_power(n, b) = uniform_in(rng, 0.2, 1.0);
  topo.links.bs_dc_power.resize(B, S);
  topo.links.bs_dc_cap.resize(B, S);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      topo.links.bs_dc_power(b, s) = uniform_in(rng, 5.0, 15.0);
      topo.links.bs_dc_cap(b, s) = uniform_in(rng, 3e9, 4e9);
    }
  topo.links.dc_dc_power.resize(S, S);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) topo.links.dc_dc_power(s, s2) = uniform_in(rng, 5.0, 15.0);
  topo.links.dc_bs_power.resize(S, B);
  for (int s = 0; s < S; ++s)
    for (int b = 0; b < B; ++b) topo.links.dc_bs_power(s, b) = uniform_in(rng, 5.0, 15.0);

  // Consensus graph: candidate UE-BS, BS-DC and DC-DC edges kept with the
  // configured probability, then patched to meet the connectivity rules.
  int V = N + B + S;
  topo.consensus_adjacency = Eigen::MatrixXi::Zero(V, V);
  auto add_edge = [&](int i, int j) {
    topo.consensus_adjacency(i, j) = 1;
    topo.consensus_adjacency(j, i) = 1;
  };
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b)
      if (uni(rng) < cfg.edge_probability) add_edge(topo.node_of_ue(n), topo.node_of_bs(b));
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      if (uni(rng) < cfg.edge_probability) add_edge(topo.node_of_bs(b), topo.node_of_dc(s));
  for (int s = 0; s < S; ++s)
    for (int s2 = s + 1; s2 < S; ++s2)
      if (uni(rng) < cfg.edge_probability) add_edge(topo.node_of_dc(s), topo.node_of_dc(s2));
  for (int n = 0; n < N; ++n) {
    bool any = false;
    for (int b = 0; b < B; ++b) any |= topo.consensus_adjacency(topo.node_of_ue(n), topo.node_of_bs(b)) != 0;
    if (!any) add_edge(topo.node_of_ue(n), topo.node_of_bs(topo.ue_subnet[n] * cfg.bss_per));
  }
  for (int b = 0; b < B; ++b) {
    bool any = false;
    for (int s = 0; s < S; ++s) any |= topo.consensus_adjacency(topo.node_of_bs(b), topo.node_of_dc(s)) != 0;
    if (!any) add_edge(topo.node_of_bs(b), topo.node_of_dc(topo.bs_subnet[b]));
  }
  for (int s = 0; s < S; ++s) {
    bool any = false;
    for (int s2 = 0; s2 < S; ++s2)
      if (s2 != s) any |= topo.consensus_adjacency(topo.node_of_dc(s), topo.node_of_dc(s2)) != 0;
    if (!any) add_edge(topo.node_of_dc(s), topo.node_of_dc((s + 1) % S));
  }

  topo.realize_rates(derive_seed(rng(), 1), 0);
  topo.validate();
  return topo;
}

// ---------------------------------------------------------------------------
// Config and metrics IO.

ExperimentConfig ExperimentConfig::from_toml(const TomlDoc& doc) {
  ExperimentConfig c;
  c.seed = static_cast<std::uint64_t>(doc.number_or("experiment.seed", 1));
  c.rounds = static_cast<int>(doc.number_or("experiment.rounds", 10));
  c.out_dir = doc.string_or("experiment.out_dir", ".");
  c.network.sub_networks = static_cast<int>(doc.number_or("network.sub_networks", 5));
  c.network.ues_per = static_cast<int>(doc.number_or("network.ues_per", 4));
  c.network.bss_per = static_cast<int>(doc.number_or("network.bss_per", 2));
  c.network.rate_std_frac = doc.number_or("network.rate_std_frac", 0.1);
  c.network.edge_probability = doc.number_or("network.edge_probability", 0.8);
  c.network_csv = doc.string_or("network.csv", "");
  c.network_toml = doc.string_or("network.toml", "");
  c.ml_task = doc.string_or("ml.task", "logistic");
  c.task.feature_dim = static_cast<int>(doc.number_or("ml.feature_dim", 16));
  c.task.num_classes = static_cast<int>(doc.number_or("ml.num_classes", 10));
  c.task.classes_per_ue = static_cast<int>(doc.number_or("ml.classes_per_ue", 5));
  c.task.class_separation = doc.number_or("ml.class_separation", 3.0);
  c.hp.eta = doc.number_or("ml.eta", 0.001);
  c.hp.mu = doc.number_or("ml.mu", 0.01);
  c.hp.vartheta = doc.number_or("ml.vartheta", 0.01);
  c.weights.xi1 = doc.number_or("weights.xi1", c.weights.xi1);
  c.weights.xi2 = doc.number_or("weights.xi2", c.weights.xi2);
  c.weights.xi3 = doc.number_or("weights.xi3", c.weights.xi3);
  auto sub = doc.array_or("weights.xi3_sub", {});
  for (std::size_t i = 0; i < sub.size() && i < 6; ++i) c.weights.xi3_sub[i] = sub[i];
  c.solver = SolverConfig::from_toml(doc);
  c.drift.kind = doc.string_or("drift.kind", "none");
  c.drift.hot_multiplier = doc.number_or("drift.hot_multiplier", 3.0);
  c.drift.period = static_cast<int>(doc.number_or("drift.period", 1));
  c.data_mean = doc.number_or("data.mean", 2000.0);
  c.data_std = doc.number_or("data.std", 200.0);
  c.data_cap = static_cast<int>(doc.number_or("data.cap", 2500));
  c.estimation_points = static_cast<int>(doc.number_or("estimation.points", 64));
  c.estimation_J = static_cast<int>(doc.number_or("estimation.J", 8));
  c.drift_probes = static_cast<int>(doc.number_or("estimation.drift_probes", 16));
  c.dynamic_estimation = doc.number_or("estimation.dynamic", 0) != 0;
  c.default_delta = doc.number_or("estimation.default_delta", 0.3);
  c.test_points = static_cast<int>(doc.number_or("ml.test_points", 2000));
  c.use_integer_recovery = doc.number_or("solver.integer_recovery", 1) != 0;
  return c;
}

TomlDoc ExperimentConfig::to_toml() const {
  TomlDoc doc = solver.to_toml();
  doc.set_number("experiment.seed", static_cast<double>(seed));
  doc.set_number("experiment.rounds", rounds);
  doc.set_string("experiment.out_dir", out_dir);
  doc.set_number("network.sub_networks", network.sub_networks);
  doc.set_number("network.ues_per", network.ues_per);
  doc.set_number("network.bss_per", network.bss_per);
  doc.set_number("network.rate_std_frac", network.rate_std_frac);
  doc.set_number("network.edge_probability", network.edge_probability);
  doc.set_string("ml.task", ml_task);
  doc.set_number("ml.feature_dim", task.feature_dim);
  doc.set_number("ml.num_classes", task.num_classes);
  doc.set_number("ml.classes_per_ue", task.classes_per_ue);
  doc.set_number("ml.eta", hp.eta);
  doc.set_number("ml.mu", hp.mu);
  doc.set_number("ml.vartheta", hp.vartheta);
  doc.set_number("weights.xi1", weights.xi1);
  doc.set_number("weights.xi2", weights.xi2);
  doc.set_number("weights.xi3", weights.xi3);
  doc.set_array("weights.xi3_sub",
                std::vector<double>(weights.xi3_sub.begin(), weights.xi3_sub.end()));
  doc.set_string("drift.kind", drift.kind);
  doc.set_number("drift.hot_multiplier", drift.hot_multiplier);
  doc.set_number("drift.period", drift.period);
  doc.set_number("data.mean", data_mean);
  doc.set_number("data.std", data_std);
  doc.set_number("data.cap", data_cap);
  return doc;
}

CsvTable MetricsTable::to_csv() const {
  CsvTable t;
  t.header = {"round", "aggregator_id", "global_loss", "test_acc", "delta_A", "delta_R",
              "total_energy_J", "energy_data_J", "energy_proc_J", "energy_agg_J",
              "objective_value", "avg_gamma", "avg_m", "avg_f"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.round), std::to_string(r.aggregator_id),
                      csv_num(r.global_loss), csv_num(r.test_acc), csv_num(r.delta_a),
                      csv_num(r.delta_r), csv_num(r.energy_total), csv_num(r.energy_data),
                      csv_num(r.energy_proc), csv_num(r.energy_agg),
                      csv_num(r.objective_value), csv_num(r.avg_gamma), csv_num(r.avg_m),
                      csv_num(r.avg_f)});
  }
  return t;
}

MetricsTable MetricsTable::from_csv(const std::string& method, const CsvTable& csv) {
  MetricsTable t;
  t.method = method;
  int c_round = csv.column("round"), c_agg = csv.column("aggregator_id");
  int c_loss = csv.column("global_loss"), c_acc = csv.column("test_acc");
  int c_da = csv.column("delta_A"), c_dr = csv.column("delta_R");
  int c_e = csv.column("total_energy_J");
  int c_ec = csv.column("energy_data_J"), c_ed = csv.column("energy_proc_J");
  int c_ee = csv.column("energy_agg_J"), c_obj = csv.column("objective_value");
  int c_g = csv.column("avg_gamma"), c_m = csv.column("avg_m"), c_f = csv.column("avg_f");
  for (const auto& row : csv.rows) {
    MetricsRow r;
    r.round = std::stoi(row[c_round]);
    r.aggregator_id = std::stoi(row[c_agg]);
    r.global_loss = std::stod(row[c_loss]);
    r.test_acc = std::stod(row[c_acc]);
    r.delta_a = std::stod(row[c_da]);
    r.delta_r = std::stod(row[c_dr]);
    r.energy_total = std::stod(row[c_e]);
    r.energy_data = std::stod(row[c_ec]);
    r.energy_proc = std::stod(row[c_ed]);
    r.energy_agg = std::stod(row[c_ee]);
    r.objective_value = std::stod(row[c_obj]);
    r.avg_gamma = std::stod(row[c_g]);
    r.avg_m = std::stod(row[c_m]);
    r.avg_f = std::stod(row[c_f]);
    t.rows.push_back(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Baselines.

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "fednova_uniform") return BaselineKind::FednovaUniform;
  if (name == "fedavg_uniform") return BaselineKind::FedavgUniform;
  if (name == "fixed_aggregator") return BaselineKind::FixedAggregator;
  if (name == "greedy_datapoints") return BaselineKind::GreedyDatapoints;
  if (name == "greedy_rate") return BaselineKind::GreedyRate;
  throw ConfigError("unknown baseline: " + name);
}

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::FednovaUniform: return "fednova_uniform";
    case BaselineKind::FedavgUniform: return "fedavg_uniform";
    case BaselineKind::FixedAggregator: return "fixed_aggregator";
    case BaselineKind::GreedyDatapoints: return "greedy_datapoints";
    case BaselineKind::GreedyRate: return "greedy_rate";
  }
  throw ConfigError("bad baseline kind");
}

DecisionVector make_baseline_decision(const Problem& problem, BaselineKind kind,
                                      int fixed_aggregator) {
  const Topology& topo = problem.topology();
  const int N = topo.num_ues(), S = topo.num_dcs();
  DecisionVector v = problem.initial_point();
  int aggregator = -1;
  switch (kind) {
    case BaselineKind::FednovaUniform:
    case BaselineKind::FedavgUniform:
      v.rho_ue_bs.setZero();
      aggregator = 0;
      break;
    case BaselineKind::FixedAggregator:
      aggregator = fixed_aggregator;
      break;
    case BaselineKind::GreedyDatapoints: {
      Vec conc = Vec::Zero(S);
      for (int n = 0; n < N; ++n) conc(topo.ue_subnet[n]) += problem.ue_data()(n);
      int best = 0;
      for (int s = 1; s < S; ++s)
        if (conc(s) > conc(best)) best = s;
      aggregator = best;
      break;
    }
    case BaselineKind::GreedyRate: {
      int best = 0;
      double best_rate = -1.0;
      for (int s = 0; s < S; ++s) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) acc += e2e_rate(topo, n, s);
        if (acc / N > best_rate) {
          best_rate = acc / N;
          best = s;
        }
      }
      aggregator = best;
      break;
    }
  }
  v.i_dc.setZero();
  v.i_dc(aggregator) = 1.0;

  OffloadPlan plan{v.rho_ue_bs, v.rho_bs_dc, problem.ue_data()};
  MlSettings ml{v.gamma, v.m, v.f, v.z};
  AggregationIndicators ind{v.i_dc, v.i_ue_bs, v.i_bs_ue};
  CostLedger led = round_cost(topo, plan, ind, ml, &v.r_bs_dc);
  v.delta_a = led.agg_delay;
  v.delta_r = led.recv_delay;
  return v;
}

// ---------------------------------------------------------------------------
// Experiment runner.

namespace {

// Integer partition of `total` into shares proportional to `weights`
// (largest-remainder so the counts sum to round(sum)).
std::vector<int> partition_counts(int total, const Vec& weights) {
  int k = static_cast<int>(weights.size());
  std::vector<int> out(k, 0);
  double wsum = weights.sum();
  if (total <= 0 || wsum <= 0.0) return out;
  std::vector<std::pair<double, int>> rem(k);
  int assigned = 0;
  int want = 0;
  {
    double mass = 0.0;
    for (int i = 0; i < k; ++i) mass += weights(i);
    want = static_cast<int>(std::lround(std::min(mass, 1.0) * total));
  }
  for (int i = 0; i < k; ++i) {
    double exact = weights(i) * total;
    out[i] = static_cast<int>(std::floor(exact));
    rem[i] = {exact - out[i], i};
    assigned += out[i];
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; assigned < want && i < k; ++i, ++assigned) ++out[rem[i].second];
  return out;
}

struct Runner {
  const ExperimentConfig& cfg;
  bool is_cefl;
  BaselineKind kind;
  int fixed_aggregator;

  Topology topo;
  std::unique_ptr<Model> model;
  Mat class_means;
  std::vector<std::vector<int>> ue_classes;
  DpuDataset test_set;
  std::vector<DpuDataset> ue_store;
  std::vector<DpuDataset> dpu_prev;  // previous round's routed datasets
  Vec x_global;
  BoundParams bounds;
  bool bounds_ready = false;
  Vec curvature_cache;
  Vec warm_w;
  bool has_warm = false;
  double prev_tau = 0.0;
  DecisionVector prev_decision;
  bool has_prev_decision = false;

  explicit Runner(const ExperimentConfig& c, bool cefl, BaselineKind k, int fa)
      : cfg(c), is_cefl(cefl), kind(k), fixed_aggregator(fa) {
    if (!c.network_csv.empty())
      topo = Topology::load(c.network_csv, c.network_toml);
    else {
      Rng rng = make_rng(c.seed, 0xB00);
      topo = generate_network(c.network, rng);
    }
    model = make_model(c.ml_task);
    Rng rng = make_rng(c.seed, 0x7A5C);
    class_means = make_class_means(c.task, rng);
    ue_classes.resize(topo.num_ues());
    for (int n = 0; n < topo.num_ues(); ++n) ue_classes[n] = pick_class_subset(c.task, rng);
    std::vector<int> all_classes(c.task.num_classes);
    std::iota(all_classes.begin(), all_classes.end(), 0);
    test_set = sample_mixture(c.task, class_means, all_classes, c.test_points, rng);
    ue_store.resize(topo.num_ues());
    int dim = model->param_dim(c.task.feature_dim, c.task.num_classes);
    x_global = Vec::Zero(dim);
  }

  void acquire_data(int round) {
    int hot = -1;
    if (cfg.drift.kind == "rotate")
      hot = (round / std::max(cfg.drift.period, 1)) % topo.num_dcs();
    for (int n = 0; n < topo.num_ues(); ++n) {
      Rng rng = make_rng(cfg.seed, 0xDA7A, n, round);
      std::normal_distribution<double> size_dist(cfg.data_mean, cfg.data_std);
      double want = std::max(size_dist(rng), 50.0);
      if (hot >= 0 && topo.ue_subnet[n] == hot) want *= cfg.drift.hot_multiplier;
      auto fresh = sample_mixture(cfg.task, class_means, ue_classes[n],
                                  static_cast<int>(want), rng);
      ue_store[n].append(fresh);
      int cap = cfg.data_cap;
      if (hot >= 0 && topo.ue_subnet[n] == hot)
        cap = static_cast<int>(cap * cfg.drift.hot_multiplier);
      ue_store[n].evict_to(cap);
    }
  }

  Vec data_sizes() const {
    Vec d(topo.num_ues());
    for (int n = 0; n < topo.num_ues(); ++n) d(n) = ue_store[n].size();
    return d;
  }

  // Moves actual points along the plan: per-UE split to BSs, per-BS split to
  // DCs, largest-remainder counts, shuffled deterministically.
  std::vector<DpuDataset> route_points(const DecisionVector& v, int round) {
    const int N = topo.num_ues(), B = topo.num_bss(), S = topo.num_dcs();
    std::vector<DpuDataset> dpu(N + S);
    std::vector<DpuDataset> at_bs(B);
    for (int n = 0; n < N; ++n) {
      const DpuDataset& store = ue_store[n];
      int D = store.size();
      std::vector<int> idx(D);
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng = make_rng(cfg.seed, 0x5017, n, round);
      for (int i = D - 1; i > 0; --i) {
        std::uniform_int_distribution<int> d(0, i);
        std::swap(idx[i], idx[d(rng)]);
      }
      auto counts = partition_counts(D, v.rho_ue_bs.row(n).transpose());
      int cursor = 0;
      for (int b = 0; b < B; ++b) {
        if (counts[b] == 0) continue;
        std::vector<int> pick(idx.begin() + cursor, idx.begin() + cursor + counts[b]);
        std::sort(pick.begin(), pick.end());
        at_bs[b].append(store.subset(pick));
        cursor += counts[b];
      }
      std::vector<int> keep(idx.begin() + cursor, idx.end());
      std::sort(keep.begin(), keep.end());
      dpu[n] = store.subset(keep);
    }
    for (int b = 0; b < B; ++b) {
      int D = at_bs[b].size();
      if (D == 0) continue;
      auto counts = partition_counts(D, v.rho_bs_dc.row(b).transpose());
      // BS keeps nothing: give any residual points to the largest share.
      int assigned = std::accumulate(counts.begin(), counts.end(), 0);
      if (assigned < D) {
        int best = 0;
        for (int s = 1; s < S; ++s)
          if (v.rho_bs_dc(b, s) > v.rho_bs_dc(b, best)) best = s;
        counts[best] += D - assigned;
      }
      int cursor = 0;
      std::vector<int> order(D);
      std::iota(order.begin(), order.end(), 0);
      for (int s = 0; s < S; ++s) {
        if (counts[s] == 0) continue;
        std::vector<int> pick(order.begin() + cursor, order.begin() + cursor + counts[s]);
        dpu[N + s].append(at_bs[b].subset(pick));
        cursor += counts[s];
      }
    }
    return dpu;
  }

  void update_bounds(int round, const std::vector<DpuDataset>& est_data) {
    const int d = topo.num_dpus();
    Rng rng = make_rng(cfg.seed, 0xE577, round);
    bool estimate_now = !bounds_ready || cfg.dynamic_estimation;
    if (estimate_now) {
      BoundParams fresh;
      fresh.scale_factor = 1.5;
      fresh.theta = Vec::Zero(d);
      fresh.sigma_sq = Vec::Zero(d);
      std::vector<DpuDataset> subsets(d);
      for (int i = 0; i < d; ++i)
        subsets[i] = est_data[i].size() > 0
                         ? make_estimation_subset(est_data[i], cfg.estimation_points, rng)
                         : est_data[i];
      for (int i = 0; i < d; ++i)
        if (subsets[i].size() >= 2)
          fresh.theta(i) = estimate_theta(*model, subsets[i], cfg.estimation_J, rng);
      fresh.L = std::max(estimate_smoothness(*model, subsets, cfg.estimation_J, rng), 1e-9);
      auto dis = estimate_dissimilarity(*model, est_data, std::max(cfg.estimation_J, 2), rng);
      fresh.zeta1 = dis.zeta1;
      fresh.zeta2 = dis.zeta2;
      if (!bounds_ready) {
        bounds = fresh;
        // Initial loss and a pooled-training estimate of the best loss.
        DpuDataset pooled;
        for (const auto& ds : est_data) pooled.append(ds);
        Rng r2 = make_rng(cfg.seed, 0xF57A);
        pooled = make_estimation_subset(pooled, 4000, r2);
        bounds.initial_loss = pooled.size() > 0 ? model->mean_loss(x_global, pooled) : 0.0;
        double fstar = bounds.initial_loss;
        if (pooled.size() > 0) {
          Vec x = x_global;
          double step = 1.0 / std::max(bounds.L, 1.0);
          for (int it = 0; it < 120; ++it) {
            x -= step * model->mean_grad(x, pooled);
            fstar = std::min(fstar, model->mean_loss(x, pooled));
          }
        }
        bounds.f_star = fstar;
      } else {
        bounds.L = std::max(bounds.L, fresh.L);
        bounds.zeta1 = std::max(bounds.zeta1, fresh.zeta1);
        bounds.zeta2 = std::max(bounds.zeta2, fresh.zeta2);
        bounds.theta = bounds.theta.cwiseMax(fresh.theta);
      }
    }
    bounds.sigma_sq = Vec::Zero(d);
    for (int i = 0; i < d; ++i) bounds.sigma_sq(i) = est_data[i].sample_variance();
    bounds.theta_max = bounds.theta.maxCoeff();
    bounds.sigma_max_sq = bounds.sigma_sq.maxCoeff();

    // Measured drift against the previous round's routed datasets.
    if (dpu_prev.empty() || prev_tau <= 0.0) {
      bounds.delta = Vec::Constant(d, cfg.default_delta);
    } else {
      Rng pr = make_rng(cfg.seed, 0xD21F, round);
      auto probes =
          make_drift_probes(static_cast<int>(x_global.size()), x_global, cfg.drift_probes, pr);
      bounds.delta = measure_drift(*model, dpu_prev, est_data, probes, prev_tau);
    }
    bounds_ready = true;
  }

  MetricsRow execute_round(int round, const DecisionVector& v, Problem& problem) {
    const int N = topo.num_ues(), S = topo.num_dcs();
    auto dpu = route_points(v, round);

    // Local training with the solved settings (gamma executes as the ceiling).
    std::vector<double> sizes(N + S);
    std::vector<Vec> grads(N + S);
    for (int i = 0; i < N + S; ++i) {
      sizes[i] = dpu[i].size();
      if (dpu[i].size() == 0 || v.gamma(i) <= 0.0) {
        grads[i] = Vec::Zero(x_global.size());
        continue;
      }
      LocalRunConfig lrc;
      lrc.gamma = static_cast<int>(std::ceil(v.gamma(i)));
      lrc.m = std::min(std::max(v.m(i), 1e-3), 1.0);
      lrc.seed = derive_seed(cfg.seed, 0x10CA1, i, round);
      auto res = local_train(*model, x_global, dpu[i], lrc, cfg.hp);
      if (is_cefl || kind != BaselineKind::FedavgUniform) {
        grads[i] = normalized_accum_gradient(x_global, res.x_final, lrc.gamma, cfg.hp);
      } else {
        // FedAvg-style: raw accumulated gradient, no ||a||_1 normalization.
        grads[i] = (x_global - res.x_final) / cfg.hp.eta;
      }
    }
    x_global = global_aggregate(x_global, sizes, grads, cfg.hp);

    // Executed-cost ledger.
    DecisionVector exec = v;
    for (int i = 0; i < N + S; ++i) {
      exec.gamma(i) = std::ceil(std::max(v.gamma(i), 0.0));
      exec.m(i) = std::min(std::max(v.m(i), 1e-3), 1.0);
    }
    OffloadPlan plan{exec.rho_ue_bs, exec.rho_bs_dc, data_sizes()};
    MlSettings ml{exec.gamma, exec.m, exec.f, exec.z};
    AggregationIndicators ind{exec.i_dc, exec.i_ue_bs, exec.i_bs_ue};
    CostLedger led = round_cost(topo, plan, ind, ml, &exec.r_bs_dc);
    prev_tau = led.round_duration();
    dpu_prev = dpu;

    MetricsRow row;
    row.round = round;
    int agg = 0;
    for (int s = 1; s < S; ++s)
      if (v.i_dc(s) > v.i_dc(agg)) agg = s;
    row.aggregator_id = agg;
    row.global_loss = global_loss(*model, x_global, dpu);
    row.test_acc = model->accuracy(x_global, test_set);
    row.delta_a = led.agg_delay;
    row.delta_r = led.recv_delay;
    row.energy_data = led.data_transfer_energy();
    row.energy_proc = led.processing_energy();
    row.energy_agg = led.agg_energy + led.recv_energy;
    row.energy_total = led.total_energy();
    row.objective_value = problem.objective_physical(v);
    row.avg_gamma = v.gamma.mean();
    row.avg_m = v.m.mean();
    row.avg_f = v.f.mean();
    return row;
  }

  MetricsTable run() {
    MetricsTable table;
    table.method = is_cefl ? "cefl" : baseline_name(kind);
    for (int t = 0; t < cfg.rounds; ++t) {
      acquire_data(t);
      topo.realize_rates(cfg.seed, t);
      Vec dbar = data_sizes();

      // Estimation datasets: previous round's routed data when available,
      // otherwise a provisional routing of the standard initial plan.
      Problem probe(topo, dbar, placeholder_bounds(), cfg.weights, cfg.hp);
      std::vector<DpuDataset> est_data;
      if (!dpu_prev.empty())
        est_data = dpu_prev;
      else
        est_data = route_points(probe.initial_point(), t);
      update_bounds(t, est_data);

      Problem problem(topo, dbar, bounds, cfg.weights, cfg.hp);
      if (curvature_cache.size() == problem.num_constraints())
        problem.set_curvature(curvature_cache);

      DecisionVector decision;
      if (is_cefl) {
        try {
          SolverConfig scfg = cfg.solver;
          scfg.curvature_seed = derive_seed(cfg.seed, 0xC02F);
          const Vec* warm = has_warm && warm_w.size() == problem.dim() ? &warm_w : nullptr;
          Vec projected;
          if (warm) {
            projected = problem.project_node_sets(warm_w);
            warm = &projected;
          }
          SolveResult res = sca_solve(problem, scfg, warm);
          curvature_cache = problem.curvature();
          warm_w = res.w_final;
          has_warm = true;
          decision = cfg.use_integer_recovery
                         ? recover_integers(problem, res.solution, scfg)
                         : res.solution;
          prev_decision = decision;
          has_prev_decision = true;
        } catch (const SolverError&) {
          if (!has_prev_decision) throw;
          decision = prev_decision;  // round logged with the previous plan
        }
      } else {
        decision = make_baseline_decision(problem, kind, fixed_aggregator);
      }
      table.rows.push_back(execute_round(t, decision, problem));
    }
    return table;
  }

  BoundParams placeholder_bounds() const {
    BoundParams b;
    int d = topo.num_dpus();
    b.theta = Vec::Zero(d);
    b.sigma_sq = Vec::Zero(d);
    b.delta = Vec::Constant(d, cfg.default_delta);
    return b;
  }
};

}  // namespace

MetricsTable run_cefl(const ExperimentConfig& cfg) {
  Runner runner(cfg, true, BaselineKind::FixedAggregator, 0);
  return runner.run();
}

MetricsTable run_baseline(const ExperimentConfig& cfg, BaselineKind kind,
                          int fixed_aggregator) {
  Runner runner(cfg, false, kind, fixed_aggregator);
  return runner.run();
}

// ---------------------------------------------------------------------------
// Comparison and output.

namespace {

// Cumulative metric value at the accuracy crossing, linear interpolation.
double value_to_target(const MetricsTable& t, double target, bool energy) {
  double cum = 0.0;
  double prev_acc = 0.0, prev_cum = 0.0;
  for (const auto& r : t.rows) {
    double inc = energy ? r.energy_total : (r.delta_a + r.delta_r);
    cum += inc;
    if (r.test_acc >= target) {
      double frac = r.test_acc > prev_acc ? (target - prev_acc) / (r.test_acc - prev_acc) : 1.0;
      frac = std::min(std::max(frac, 0.0), 1.0);
      return prev_cum + frac * (cum - prev_cum);
    }
    prev_acc = r.test_acc;
    prev_cum = cum;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::vector<SavingsRow> compare(const MetricsTable& cefl,
                                const std::vector<MetricsTable>& baselines,
                                const std::vector<double>& target_accuracies) {
  std::vector<SavingsRow> out;
  for (const auto& base : baselines) {
    for (double target : target_accuracies) {
      for (bool energy : {true, false}) {
        SavingsRow row;
        row.baseline = base.method;
        row.target_accuracy = target;
        row.metric = energy ? "energy" : "delay";
        row.cefl_value = value_to_target(cefl, target, energy);
        row.baseline_value = value_to_target(base, target, energy);
        row.savings_pct = 100.0 * (1.0 - row.cefl_value / row.baseline_value);
        out.push_back(row);
      }
    }
  }
  return out;
}

void emit_metrics(const std::vector<MetricsTable>& tables, const std::string& dir) {
  std::filesystem::create_directories(dir);
  CsvTable summary;
  summary.header = {"method", "rounds", "final_acc", "total_energy_J", "total_delay_s"};
  CsvTable longfmt;
  longfmt.header = {"method", "round", "metric", "value"};
  for (const auto& t : tables) {
    write_csv_file(dir + "/metrics_" + t.method + ".csv", t.to_csv());
    double energy = 0.0, delay = 0.0, acc = 0.0;
    for (const auto& r : t.rows) {
      energy += r.energy_total;
      delay += r.delta_a + r.delta_r;
      acc = r.test_acc;
      const std::pair<const char*, double> metrics[] = {
          {"test_acc", r.test_acc},
          {"global_loss", r.global_loss},
          {"round_delay", r.delta_a + r.delta_r},
          {"round_energy", r.energy_total},
          {"objective", r.objective_value}};
      for (const auto& [name, value] : metrics) {
        longfmt.rows.push_back(
            {t.method, std::to_string(r.round), name, csv_num(value)});
      }
    }
    summary.rows.push_back({t.method, std::to_string(t.rows.size()), csv_num(acc),
                            csv_num(energy), csv_num(delay)});
  }
  write_csv_file(dir + "/summary.csv", summary);
  write_csv_file(dir + "/long_format.csv", longfmt);
}

// ---------------------------------------------------------------------------
// Selftest.

bool selftest(std::uint64_t seed) {
  bool ok = true;
  auto check = [&](bool cond, const char* what) {
    if (!cond) {
      ok = false;
      std::fprintf(stderr, "selftest failure: %s\n", what);
    }
  };
  Rng rng(seed);

  // Data conservation under a random plan.
  {
    NetworkGenConfig nc;
    nc.sub_networks = 2;
    Topology topo = generate_network(nc, rng);
    int N = topo.num_ues(), B = topo.num_bss(), S = topo.num_dcs();
    OffloadPlan plan;
    plan.initial_ue_data = Vec::Constant(N, 100.0);
    plan.rho_ue_bs = Mat::Zero(N, B);
    plan.rho_bs_dc = Mat::Zero(B, S);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int n = 0; n < N; ++n) {
      Vec row(B);
      for (int b = 0; b < B; ++b) row(b) = uni(rng);
      plan.rho_ue_bs.row(n) = (row / (row.sum() + 1.0)).transpose();
    }
    for (int b = 0; b < B; ++b) {
      Vec row(S);
      for (int s = 0; s < S; ++s) row(s) = uni(rng);
      plan.rho_bs_dc.row(b) = (row / row.sum()).transpose();
    }
    auto data = apply_offload_plan(plan);
    double total = data.ue_kept.sum() + data.dc_total.sum();
    check(std::abs(total - plan.initial_ue_data.sum()) < 1e-9 * plan.initial_ue_data.sum(),
          "offload conservation");

    // Round-cost envelope: the aggregation delay matches its worst branch.
    DecisionVector v;
    Vec dbar = plan.initial_ue_data;
    BoundParams bp;
    bp.theta = Vec::Zero(N + S);
    bp.sigma_sq = Vec::Zero(N + S);
    bp.delta = Vec::Constant(N + S, 0.3);
    Problem prob(topo, dbar, bp, ObjectiveWeights{}, MlHyperParams{});
    v = prob.initial_point();
    check(prob.feasibility_check(v).ok(), "initial point feasibility");
  }

  // Consensus mean preservation.
  {
    NetworkGenConfig nc;
    nc.sub_networks = 2;
    Topology topo = generate_network(nc, rng);
    Mat W = build_consensus_weights(topo.consensus_adjacency, 0.02);
    Mat state(W.rows(), 3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < state.rows(); ++i)
      for (int j = 0; j < 3; ++j) state(i, j) = normal(rng);
    Vec mean0 = state.colwise().mean().transpose();
    Mat s2 = state;
    consensus_run(s2, W, 50, 0);
    Vec mean1 = s2.colwise().mean().transpose();
    check((mean0 - mean1).cwiseAbs().maxCoeff() < 1e-10, "consensus mean preservation");
    double dev0 = (state.rowwise() - mean0.transpose()).cwiseAbs().maxCoeff();
    double dev1 = (s2.rowwise() - mean1.transpose()).cwiseAbs().maxCoeff();
    check(dev1 < dev0, "consensus contraction");
  }

  // Simplex projections keep feasibility and fixed points.
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int it = 0; it < 20; ++it) {
      Vec x(5);
      for (int i = 0; i < 5; ++i) x(i) = normal(rng);
      Vec p = project_simplex_eq(x, 1.0);
      check(std::abs(p.sum() - 1.0) < 1e-9 && p.minCoeff() >= -1e-12, "simplex projection");
      Vec q = project_simplex_eq(p, 1.0);
      check((p - q).cwiseAbs().maxCoeff() < 1e-9, "simplex idempotency");
    }
  }

  // Aggregation equivalence on one random configuration.
  {
    LogisticModel model;
    SyntheticTaskConfig task;
    task.feature_dim = 4;
    task.num_classes = 3;
    Mat means = make_class_means(task, rng);
    auto ds = sample_mixture(task, means, {0, 1, 2}, 30, rng);
    MlHyperParams hp;
    hp.eta = 0.01;
    hp.mu = 0.02;
    LocalRunConfig lrc;
    lrc.gamma = 4;
    lrc.m = 0.5;
    lrc.seed = 99;
    Vec x0 = Vec::Zero(model.param_dim(4, 3));
    auto res = local_train(model, x0, ds, lrc, hp, true);
    Vec d_diff = normalized_accum_gradient(x0, res.x_final, lrc.gamma, hp);
    Vec a = accumulation_weights(lrc.gamma, hp.eta, hp.mu);
    Vec d_direct = Vec::Zero(x0.size());
    for (int l = 0; l < lrc.gamma; ++l) d_direct += a(l) * res.stochastic_grads[l];
    d_direct /= a.lpNorm<1>();
    check((d_diff - d_direct).cwiseAbs().maxCoeff() < 1e-9, "aggregation equivalence");
  }

  // Deterministic network generation.
  {
    NetworkGenConfig nc;
    nc.sub_networks = 2;
    Rng r1(123), r2(123);
    Topology t1 = generate_network(nc, r1);
    Topology t2 = generate_network(nc, r2);
    std::ostringstream a, b;
    write_csv(a, t1.links_to_csv());
    write_csv(b, t2.links_to_csv());
    check(a.str() == b.str(), "generate_network determinism");
  }

  return ok;
}

}  // namespace cefl
