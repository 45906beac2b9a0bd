#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cefl/harness.hpp"

namespace py = pybind11;
using namespace cefl;

namespace {

Topology generate_topology(int sub_networks, int ues_per, int bss_per, std::uint64_t seed,
                           double rate_std_frac, double edge_probability) {
  NetworkGenConfig cfg;
  cfg.sub_networks = sub_networks;
  cfg.ues_per = ues_per;
  cfg.bss_per = bss_per;
  cfg.rate_std_frac = rate_std_frac;
  cfg.edge_probability = edge_probability;
  Rng rng = make_rng(seed, 0xB00);
  return generate_network(cfg, rng);
}

py::dict decision_to_dict(const DecisionVector& v) {
  py::dict out;
  out["rho_ue_bs"] = v.rho_ue_bs;
  out["rho_bs_dc"] = v.rho_bs_dc;
  out["f"] = v.f;
  out["z"] = v.z;
  out["gamma"] = v.gamma;
  out["m"] = v.m;
  out["i_dc"] = v.i_dc;
  out["i_ue_bs"] = v.i_ue_bs;
  out["i_bs_ue"] = v.i_bs_ue;
  out["delta_a"] = v.delta_a;
  out["delta_r"] = v.delta_r;
  out["r_bs_dc"] = v.r_bs_dc;
  return out;
}

py::dict metrics_to_dict(const MetricsTable& t) {
  py::list rounds, acc, loss, delay, energy, aggregator, objective;
  for (const auto& r : t.rows) {
    rounds.append(r.round);
    acc.append(r.test_acc);
    loss.append(r.global_loss);
    delay.append(r.delta_a + r.delta_r);
    energy.append(r.energy_total);
    aggregator.append(r.aggregator_id);
    objective.append(r.objective_value);
  }
  py::dict out;
  out["method"] = t.method;
  out["round"] = rounds;
  out["test_acc"] = acc;
  out["global_loss"] = loss;
  out["round_delay"] = delay;
  out["round_energy"] = energy;
  out["aggregator_id"] = aggregator;
  out["objective"] = objective;
  return out;
}

ExperimentConfig config_from_kwargs(std::uint64_t seed, int rounds, int sub_networks,
                                    double xi1, double xi2, double xi3, int sca_iters,
                                    int pd_iters, int consensus_rounds) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.rounds = rounds;
  cfg.network.sub_networks = sub_networks;
  cfg.weights.xi1 = xi1;
  cfg.weights.xi2 = xi2;
  cfg.weights.xi3 = xi3;
  cfg.solver.sca_max_iters = sca_iters;
  cfg.solver.pd_max_iters = pd_iters;
  cfg.solver.consensus_rounds = consensus_rounds;
  cfg.solver.lambda1 = 0.05;
  cfg.solver.sca_step = 0.15;
  cfg.solver.kappa = 0.5;
  cfg.solver.epsilon = 1e-3;
  cfg.estimation_J = 4;
  cfg.estimation_points = 48;
  cfg.drift_probes = 4;
  cfg.test_points = 1000;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_cefl, m) {
  m.doc() = "Cooperative edge-assisted federated learning: network cost model, "
            "convergence-bound estimators and the distributed orchestration solver.";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<SetupError>(m, "SetupError");
  py::register_exception<SolverError>(m, "SolverError");

  m.def("uplink_rate", &uplink_rate, py::arg("bandwidth_hz"), py::arg("tx_power_w"),
        py::arg("gain"), py::arg("n0"),
        "Shannon-style uplink rate V*log2(1 + P*g/(n0*V)) in bps.");
  m.def("downlink_rate", &downlink_rate, py::arg("bs_bandwidth_hz"), py::arg("bs_power_w"),
        py::arg("gain"), py::arg("n0"));
  m.def("sgd_variance_bound", &sgd_variance_bound, py::arg("D"), py::arg("m"),
        py::arg("sigma_sq"), py::arg("theta"),
        "Mini-batch SGD variance bound 2(1-m)(D-1) sigma^2 theta^2 / (m D^2).");
  m.def(
      "step_size_check",
      [](double eta, const Vec& gammas, double mu, double zeta1, double L) {
        auto r = step_size_check(eta, gammas, mu, zeta1, L);
        return py::make_tuple(r.ok, r.value, r.threshold);
      },
      py::arg("eta"), py::arg("gammas"), py::arg("mu"), py::arg("zeta1"), py::arg("L"),
      "Returns (ok, lhs, threshold) for the step-size condition.");
  m.def(
      "accumulation_weights",
      [](int gamma, double eta, double mu) { return accumulation_weights(gamma, eta, mu); },
      py::arg("gamma"), py::arg("eta"), py::arg("mu"));

  m.def(
      "apply_offload_plan",
      [](const Mat& rho_ue_bs, const Mat& rho_bs_dc, const Vec& initial_ue_data) {
        OffloadPlan plan{rho_ue_bs, rho_bs_dc, initial_ue_data};
        auto data = apply_offload_plan(plan);
        py::dict out;
        out["ue_kept"] = data.ue_kept;
        out["ue_bs"] = data.ue_bs;
        out["bs_total"] = data.bs_total;
        out["bs_dc"] = data.bs_dc;
        out["dc_total"] = data.dc_total;
        return out;
      },
      py::arg("rho_ue_bs"), py::arg("rho_bs_dc"), py::arg("initial_ue_data"),
      "Data volumes (points) after routing an offload plan.");

  m.def(
      "consensus_weights",
      [](const Eigen::MatrixXi& adjacency, double z) {
        return build_consensus_weights(adjacency, z);
      },
      py::arg("adjacency"), py::arg("z"));
  m.def(
      "consensus_run",
      [](Mat state, const Mat& weights, int rounds, int lambda_cols) {
        consensus_run(state, weights, rounds, lambda_cols);
        return state;
      },
      py::arg("state"), py::arg("weights"), py::arg("rounds"), py::arg("lambda_cols") = 0);
  m.def("project_simplex", &project_simplex_eq, py::arg("x"), py::arg("total") = 1.0);

  m.def(
      "generate_network_files",
      [](const std::string& csv_path, const std::string& toml_path, int sub_networks,
         int ues_per, int bss_per, std::uint64_t seed) {
        Topology topo = generate_topology(sub_networks, ues_per, bss_per, seed, 0.1, 0.8);
        topo.save(csv_path, toml_path);
        return py::make_tuple(topo.num_ues(), topo.num_bss(), topo.num_dcs());
      },
      py::arg("csv_path"), py::arg("toml_path"), py::arg("sub_networks") = 5,
      py::arg("ues_per") = 4, py::arg("bss_per") = 2, py::arg("seed") = 1,
      "Writes the network dataset CSV and topology TOML; returns (N, B, S).");

  m.def(
      "e2e_rate_matrix",
      [](int sub_networks, std::uint64_t seed) {
        Topology topo = generate_topology(sub_networks, 4, 2, seed, 0.1, 0.8);
        Mat out(topo.num_ues(), topo.num_dcs());
        for (int n = 0; n < topo.num_ues(); ++n)
          for (int s = 0; s < topo.num_dcs(); ++s) out(n, s) = e2e_rate(topo, n, s);
        return out;
      },
      py::arg("sub_networks") = 5, py::arg("seed") = 1,
      "Best two-hop UE->DC rates on a generated topology.");

  m.def(
      "solve_orchestration",
      [](int sub_networks, std::uint64_t seed, double xi1, double xi2, double xi3,
         int sca_iters, bool centralized, int consensus_rounds) {
        NetworkGenConfig nc;
        nc.sub_networks = sub_networks;
        Rng rng = make_rng(seed, 0xB00);
        Topology topo = generate_network(nc, rng);
        int d = topo.num_dpus();
        BoundParams bp;
        bp.L = 20.0;
        bp.theta = Vec::Constant(d, 1.5);
        bp.sigma_sq = Vec::Constant(d, 100.0);
        bp.delta = Vec::Constant(d, 1e-5);
        bp.initial_loss = 1.9;
        ObjectiveWeights w;
        w.xi1 = xi1;
        w.xi2 = xi2;
        w.xi3 = xi3;
        Rng drng = make_rng(seed, 0xDA7A);
        std::normal_distribution<double> dist(2000.0, 200.0);
        Vec dbar(topo.num_ues());
        for (int n = 0; n < topo.num_ues(); ++n) dbar(n) = std::max(dist(drng), 50.0);
        Problem problem(topo, dbar, bp, w, MlHyperParams{});
        SolverConfig cfg;
        cfg.lambda1 = 0.05;
        cfg.sca_step = 0.15;
        cfg.sca_max_iters = sca_iters;
        cfg.kappa = 0.5;
        cfg.epsilon = 1e-3;
        cfg.pd_max_iters = 12;
        cfg.consensus_rounds = consensus_rounds;
        cfg.curvature_samples = 60;
        cfg.centralized = centralized;
        SolveResult res = sca_solve(problem, cfg);
        DecisionVector rounded = recover_integers(problem, res.solution, cfg);
        py::dict out;
        out["objective"] = res.objective_value;
        out["objective_rounded"] = problem.objective_physical(rounded);
        out["trace"] = res.trace.objective;
        out["binary_residual"] = res.trace.binary_residual;
        out["monotone"] = res.trace.monotone;
        out["decision"] = decision_to_dict(rounded);
        out["feasible"] = problem.feasibility_check(rounded).ok();
        return out;
      },
      py::arg("sub_networks") = 2, py::arg("seed") = 1, py::arg("xi1") = 1.0,
      py::arg("xi2") = 1.0, py::arg("xi3") = 0.1, py::arg("sca_iters") = 40,
      py::arg("centralized") = false, py::arg("consensus_rounds") = 10,
      "One orchestration solve on a generated network; returns the rounded decision.");

  m.def(
      "run_experiment",
      [](std::uint64_t seed, int rounds, int sub_networks, const std::string& method,
         double xi1, double xi2, double xi3, int sca_iters) {
        ExperimentConfig cfg =
            config_from_kwargs(seed, rounds, sub_networks, xi1, xi2, xi3, sca_iters, 8, 6);
        MetricsTable table = method == "cefl"
                                 ? run_cefl(cfg)
                                 : run_baseline(cfg, baseline_kind_from_name(method));
        return metrics_to_dict(table);
      },
      py::arg("seed") = 1, py::arg("rounds") = 5, py::arg("sub_networks") = 2,
      py::arg("method") = "cefl", py::arg("xi1") = 1e-6, py::arg("xi2") = 0.1,
      py::arg("xi3") = 1.0, py::arg("sca_iters") = 6,
      "Full per-round loop (solve, route, train, aggregate) returning metrics lists. "
      "method is 'cefl' or a baseline name such as 'fednova_uniform'.");

  m.def("selftest", &selftest, py::arg("seed") = 7);

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "0.1.0";
#endif
}
