#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "cefl/harness.hpp"

namespace {

using nlohmann::json;

json matrix_to_json(const cefl::Mat& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

json vector_to_json(const cefl::Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json decision_to_json(const cefl::DecisionVector& v) {
  json out;
  out["rho_ue_bs"] = matrix_to_json(v.rho_ue_bs);
  out["rho_bs_dc"] = matrix_to_json(v.rho_bs_dc);
  out["f"] = vector_to_json(v.f);
  out["z"] = vector_to_json(v.z);
  out["gamma"] = vector_to_json(v.gamma);
  out["m"] = vector_to_json(v.m);
  out["i_dc"] = vector_to_json(v.i_dc);
  out["i_ue_bs"] = matrix_to_json(v.i_ue_bs);
  out["i_bs_ue"] = matrix_to_json(v.i_bs_ue);
  out["delta_a"] = v.delta_a;
  out["delta_r"] = v.delta_r;
  out["r_bs_dc"] = matrix_to_json(v.r_bs_dc);
  return out;
}

cefl::ExperimentConfig load_config(const std::string& path, std::uint64_t seed_override,
                                   bool have_seed) {
  cefl::ExperimentConfig cfg;
  if (!path.empty()) cfg = cefl::ExperimentConfig::from_toml(cefl::TomlDoc::parse_file(path));
  if (const char* env = std::getenv("CEFL_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  if (have_seed) cfg.seed = seed_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CE-FL network-aware federated learning simulator and solver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  bool seed_given = false;
  app.add_option("--config", config_path, "experiment TOML config")->expected(1);
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config and CEFL_SEED)");

  auto* gen = app.add_subcommand("generate-network", "generate a sub-network topology");
  int sub_networks = 5, ues_per = 4, bss_per = 2;
  gen->add_option("--sub-networks", sub_networks);
  gen->add_option("--ues-per", ues_per);
  gen->add_option("--bss-per", bss_per);

  auto* est = app.add_subcommand("estimate-params", "estimate smoothness/variability bounds");
  auto* slv = app.add_subcommand("solve", "run the network orchestration solver once");
  std::string network_csv, network_toml, params_toml, mode = "decentralized";
  int consensus_rounds = -1;
  slv->add_option("--network", network_csv, "network dataset CSV");
  slv->add_option("--topology", network_toml, "topology TOML");
  slv->add_option("--params", params_toml, "bound parameter TOML");
  slv->add_option("--mode", mode)->check(CLI::IsMember({"decentralized", "centralized"}));
  slv->add_option("--consensus-rounds", consensus_rounds, "J");

  auto* trn = app.add_subcommand("train", "full CE-FL experiment (solve + train per round)");
  auto* cmp = app.add_subcommand("compare-baselines", "CE-FL against the baseline suite");
  std::vector<std::string> baselines = {"fednova_uniform", "fixed_aggregator",
                                        "greedy_datapoints", "greedy_rate"};
  cmp->add_option("--baselines", baselines, "baseline list");
  std::vector<double> targets = {0.5, 0.6};
  cmp->add_option("--targets", targets, "target accuracies");
  auto* sft = app.add_subcommand("selftest", "run the built-in property suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  seed_given = seed_opt->count() > 0;

  try {
    cefl::ExperimentConfig cfg = load_config(config_path, seed, seed_given);
    cfg.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);

    if (gen->parsed()) {
      cfg.network.sub_networks = sub_networks;
      cfg.network.ues_per = ues_per;
      cfg.network.bss_per = bss_per;
      cefl::Rng rng = cefl::make_rng(cfg.seed, 0xB00);
      cefl::Topology topo = cefl::generate_network(cfg.network, rng);
      topo.save(out_dir + "/network.csv", out_dir + "/topology.toml");
      std::cout << "wrote " << out_dir << "/network.csv and topology.toml\n";
      return 0;
    }

    if (est->parsed()) {
      // Synthetic datasets on the configured topology, then the one-shot
      // estimators; the result feeds the solve subcommand.
      cefl::Rng rng = cefl::make_rng(cfg.seed, 0x7A5C);
      auto model = cefl::make_model(cfg.ml_task);
      cefl::Mat means = cefl::make_class_means(cfg.task, rng);
      int n_dpus = cfg.network.sub_networks * (cfg.network.ues_per + 1);
      std::vector<cefl::DpuDataset> data;
      for (int i = 0; i < n_dpus; ++i) {
        auto classes = cefl::pick_class_subset(cfg.task, rng);
        data.push_back(cefl::sample_mixture(cfg.task, means, classes, 256, rng));
      }
      cefl::BoundParams params;
      params.theta = cefl::Vec::Zero(n_dpus);
      params.sigma_sq = cefl::Vec::Zero(n_dpus);
      params.delta = cefl::Vec::Constant(n_dpus, cfg.default_delta);
      std::vector<cefl::DpuDataset> subsets;
      for (auto& ds : data)
        subsets.push_back(cefl::make_estimation_subset(ds, cfg.estimation_points, rng));
      for (int i = 0; i < n_dpus; ++i) {
        params.theta(i) = cefl::estimate_theta(*model, subsets[i], cfg.estimation_J, rng);
        params.sigma_sq(i) = data[i].sample_variance();
      }
      params.L = cefl::estimate_smoothness(*model, subsets, cfg.estimation_J, rng);
      auto dis = cefl::estimate_dissimilarity(*model, data, std::max(cfg.estimation_J, 2), rng);
      params.zeta1 = dis.zeta1;
      params.zeta2 = dis.zeta2;
      params.theta_max = params.theta.maxCoeff();
      params.sigma_max_sq = params.sigma_sq.maxCoeff();
      std::ofstream out(out_dir + "/params.toml");
      out << params.to_toml().dump();
      std::cout << "wrote " << out_dir << "/params.toml\n";
      return 0;
    }

    if (slv->parsed()) {
      cefl::Topology topo;
      if (!network_csv.empty())
        topo = cefl::Topology::load(network_csv, network_toml);
      else {
        cefl::Rng rng = cefl::make_rng(cfg.seed, 0xB00);
        topo = cefl::generate_network(cfg.network, rng);
      }
      int n_dpus = topo.num_dpus();
      cefl::BoundParams params;
      if (!params_toml.empty())
        params = cefl::BoundParams::from_toml(cefl::TomlDoc::parse_file(params_toml));
      if (params.theta.size() != n_dpus) params.theta = cefl::Vec::Constant(n_dpus, 1.0);
      if (params.sigma_sq.size() != n_dpus) params.sigma_sq = cefl::Vec::Constant(n_dpus, 1.0);
      if (params.delta.size() != n_dpus)
        params.delta = cefl::Vec::Constant(n_dpus, cfg.default_delta);
      cefl::Rng drng = cefl::make_rng(cfg.seed, 0xDA7A);
      std::normal_distribution<double> size_dist(cfg.data_mean, cfg.data_std);
      cefl::Vec dbar(topo.num_ues());
      for (int n = 0; n < topo.num_ues(); ++n) dbar(n) = std::max(size_dist(drng), 50.0);

      cefl::Problem problem(topo, dbar, params, cfg.weights, cfg.hp);
      cefl::SolverConfig scfg = cfg.solver;
      if (consensus_rounds > 0) scfg.consensus_rounds = consensus_rounds;
      scfg.centralized = (mode == "centralized");
      cefl::SolveResult res = cefl::sca_solve(problem, scfg);
      cefl::DecisionVector rounded = cefl::recover_integers(problem, res.solution, scfg);
      auto report = problem.feasibility_check(rounded);

      json out;
      out["objective"] = res.objective_value;
      out["objective_rounded"] = problem.objective_physical(rounded);
      out["mode"] = mode;
      out["trace"] = json{{"objective", res.trace.objective},
                          {"binary_residual", res.trace.binary_residual},
                          {"sca_iters", res.trace.sca_iters},
                          {"pd_iters_total", res.trace.pd_iters_total},
                          {"monotone", res.trace.monotone},
                          {"warning", res.trace.warning}};
      out["decision"] = decision_to_json(rounded);
      json viol = json::array();
      for (const auto& issue : report.violations)
        viol.push_back(json{{"name", issue.name}, {"residual", issue.residual}});
      out["feasibility_violations"] = viol;
      std::ofstream file(out_dir + "/solution.json");
      file << out.dump(2) << "\n";
      std::cout << "objective " << res.objective_value << ", wrote " << out_dir
                << "/solution.json\n";
      return 0;
    }

    if (trn->parsed()) {
      cefl::MetricsTable table = cefl::run_cefl(cfg);
      cefl::emit_metrics({table}, out_dir);
      std::cout << "wrote metrics for " << table.rows.size() << " rounds to " << out_dir
                << "\n";
      return 0;
    }

    if (cmp->parsed()) {
      std::vector<cefl::MetricsTable> tables;
      tables.push_back(cefl::run_cefl(cfg));
      for (const auto& name : baselines)
        tables.push_back(cefl::run_baseline(cfg, cefl::baseline_kind_from_name(name)));
      cefl::emit_metrics(tables, out_dir);
      auto rows = cefl::compare(tables.front(),
                                {tables.begin() + 1, tables.end()}, targets);
      cefl::CsvTable cmp_table;
      cmp_table.header = {"baseline", "target_acc", "metric", "cefl", "baseline_value",
                          "savings_pct"};
      for (const auto& r : rows)
        cmp_table.rows.push_back({r.baseline, cefl::csv_num(r.target_accuracy), r.metric,
                                  cefl::csv_num(r.cefl_value), cefl::csv_num(r.baseline_value),
                                  cefl::csv_num(r.savings_pct)});
      cefl::write_csv_file(out_dir + "/savings.csv", cmp_table);
      std::cout << "wrote comparison to " << out_dir << "/savings.csv\n";
      return 0;
    }

    if (sft->parsed()) {
      bool ok = cefl::selftest(cfg.seed);
      std::cout << (ok ? "selftest passed" : "selftest FAILED") << "\n";
      return ok ? 0 : 3;
    }
  } catch (const cefl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cefl::SetupError& e) {
    std::cerr << "setup error: " << e.what() << "\n";
    return 3;
  } catch (const cefl::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
