#include "cefl/topology.hpp"

#include <cmath>
#include <fstream>

namespace cefl {

double uplink_rate(double bandwidth_hz, double tx_power_w, double gain, double n0) {
  if (!is_finite(bandwidth_hz) || !is_finite(tx_power_w) || !is_finite(gain) ||
      !is_finite(n0))
    throw DomainError("uplink_rate: non-finite input");
  if (bandwidth_hz <= 0.0 || n0 <= 0.0)
    throw DomainError("uplink_rate: bandwidth and n0 must be positive");
  if (tx_power_w < 0.0 || gain < 0.0)
    throw DomainError("uplink_rate: power and gain must be nonnegative");
  double snr = tx_power_w * gain / (n0 * bandwidth_hz);
  return bandwidth_hz * std::log2(1.0 + snr);
}

double downlink_rate(double bs_bandwidth_hz, double bs_power_w, double gain, double n0) {
  return uplink_rate(bs_bandwidth_hz, bs_power_w, gain, n0);
}

namespace {

double truncated_normal(Rng& rng, double mean, double std) {
  if (std <= 0.0) return std::max(mean, 0.0);
  std::normal_distribution<double> dist(mean, std);
  double x = dist(rng);
  return x > 0.0 ? x : 0.0;
}

void realize_matrix(Mat& out, const Mat& mean, const Mat& std, Rng& rng) {
  out.resize(mean.rows(), mean.cols());
  for (Eigen::Index r = 0; r < mean.rows(); ++r)
    for (Eigen::Index c = 0; c < mean.cols(); ++c)
      out(r, c) = truncated_normal(rng, mean(r, c), std(r, c));
}

}  // namespace

void Topology::realize_rates(std::uint64_t master_seed, int round) {
  Rng rng = make_rng(master_seed, 0x11A7E5u, static_cast<std::uint64_t>(round));
  realize_matrix(links.ue_bs_rate, link_stats.ue_bs_mean, link_stats.ue_bs_std, rng);
  realize_matrix(links.bs_ue_rate, link_stats.bs_ue_mean, link_stats.bs_ue_std, rng);
  realize_matrix(links.bs_dc_rate, link_stats.bs_dc_mean, link_stats.bs_dc_std, rng);
  realize_matrix(links.dc_dc_rate, link_stats.dc_dc_mean, link_stats.dc_dc_std, rng);
  realize_matrix(links.dc_bs_rate, link_stats.dc_bs_mean, link_stats.dc_bs_std, rng);
  // Deployed BS-DC rates may not exceed their caps.
  links.bs_dc_rate = links.bs_dc_rate.cwiseMin(links.bs_dc_cap);
  for (Eigen::Index s = 0; s < links.dc_dc_rate.cols(); ++s) links.dc_dc_rate(s, s) = 0.0;
}

void Topology::validate() const {
  const int N = num_ues(), B = num_bss(), S = num_dcs();
  if (N <= 0 || B <= 0 || S <= 0) throw SetupError("topology: empty node set");
  for (const auto& ue : ue_profiles) {
    if (!(0.0 < ue.f_min && ue.f_min <= ue.f_max))
      throw SetupError("topology: need 0 < f_min <= f_max");
    if (ue.cycles_per_point < 1.0) throw SetupError("topology: c_n must be >= 1");
  }
  for (const auto& dc : dc_profiles) {
    if (dc.machine_count < 1) throw SetupError("topology: M_s must be >= 1");
    if (dc.machine_capacity <= 0.0) throw SetupError("topology: C_s must be positive");
    if (!(0.0 < dc.dynamic_power_fraction && dc.dynamic_power_fraction <= 1.0))
      throw SetupError("topology: dynamic power fraction must be in (0,1]");
    if (dc.ingress_cap <= 0.0) throw SetupError("topology: R_s^max must be positive");
  }
  if (n0 <= 0.0 || beta_data <= 0.0 || beta_model <= 0.0)
    throw SetupError("topology: n0 and beta constants must be positive");

  if (consensus_adjacency.rows() != num_nodes() ||
      consensus_adjacency.cols() != num_nodes())
    throw SetupError("topology: consensus adjacency has wrong shape");
  if (consensus_adjacency != consensus_adjacency.transpose().eval())
    throw SetupError("topology: consensus adjacency must be symmetric");
  for (int n = 0; n < N; ++n) {
    for (int s = 0; s < S; ++s)
      if (consensus_adjacency(node_of_ue(n), node_of_dc(s)) != 0)
        throw SetupError("topology: UE-DC consensus edges are not allowed");
    bool has_bs = false;
    for (int b = 0; b < B; ++b) has_bs |= consensus_adjacency(node_of_ue(n), node_of_bs(b)) != 0;
    if (!has_bs) throw SetupError("topology: every UE needs a BS consensus neighbor");
  }
  for (int b = 0; b < B; ++b) {
    bool has_dc = false;
    for (int s = 0; s < S; ++s) has_dc |= consensus_adjacency(node_of_bs(b), node_of_dc(s)) != 0;
    if (!has_dc) throw SetupError("topology: every BS needs a DC consensus neighbor");
  }
  for (int s = 0; s < S; ++s) {
    bool has_peer = false;
    for (int s2 = 0; s2 < S; ++s2)
      if (s2 != s) has_peer |= consensus_adjacency(node_of_dc(s), node_of_dc(s2)) != 0;
    if (!has_peer) throw SetupError("topology: every DC needs a DC consensus neighbor");
  }
}

namespace {

void append_links(CsvTable& t, const std::string& src_kind, const std::string& dst_kind,
                  const Mat& mean, const Mat& std, const Mat& power, const Mat* cap) {
  for (Eigen::Index r = 0; r < mean.rows(); ++r) {
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
      if (src_kind == "dc" && dst_kind == "dc" && r == c) continue;
      t.rows.push_back({src_kind, std::to_string(r), dst_kind, std::to_string(c),
                        csv_num(mean(r, c)), csv_num(std(r, c)), csv_num(power(r, c)),
                        csv_num(cap ? (*cap)(r, c) : 0.0)});
    }
  }
}

}  // namespace

CsvTable Topology::links_to_csv() const {
  CsvTable t;
  t.header = {"src_kind", "src_id", "dst_kind", "dst_id",
              "rate_mean_bps", "rate_std_bps", "power_w", "cap_bps"};
  append_links(t, "ue", "bs", link_stats.ue_bs_mean, link_stats.ue_bs_std,
               links.ue_bs_power, nullptr);
  Mat zero_bn = Mat::Zero(num_bss(), num_ues());
  append_links(t, "bs", "ue", link_stats.bs_ue_mean, link_stats.bs_ue_std, zero_bn,
               nullptr);
  append_links(t, "bs", "dc", link_stats.bs_dc_mean, link_stats.bs_dc_std,
               links.bs_dc_power, &links.bs_dc_cap);
  append_links(t, "dc", "dc", link_stats.dc_dc_mean, link_stats.dc_dc_std,
               links.dc_dc_power, nullptr);
  append_links(t, "dc", "bs", link_stats.dc_bs_mean, link_stats.dc_bs_std,
               links.dc_bs_power, nullptr);
  return t;
}

void Topology::links_from_csv(const CsvTable& t) {
  const int N = num_ues(), B = num_bss(), S = num_dcs();
  auto init = [](Mat& m, int r, int c) { m = Mat::Zero(r, c); };
  init(link_stats.ue_bs_mean, N, B);
  init(link_stats.ue_bs_std, N, B);
  init(link_stats.bs_ue_mean, B, N);
  init(link_stats.bs_ue_std, B, N);
  init(link_stats.bs_dc_mean, B, S);
  init(link_stats.bs_dc_std, B, S);
  init(link_stats.dc_dc_mean, S, S);
  init(link_stats.dc_dc_std, S, S);
  init(link_stats.dc_bs_mean, S, B);
  init(link_stats.dc_bs_std, S, B);
  init(links.ue_bs_power, N, B);
  init(links.bs_dc_power, B, S);
  init(links.bs_dc_cap, B, S);
  init(links.dc_dc_power, S, S);
  init(links.dc_bs_power, S, B);

  int ck_src_kind = t.column("src_kind"), ck_src = t.column("src_id");
  int ck_dst_kind = t.column("dst_kind"), ck_dst = t.column("dst_id");
  int ck_mean = t.column("rate_mean_bps"), ck_std = t.column("rate_std_bps");
  int ck_pow = t.column("power_w"), ck_cap = t.column("cap_bps");

  for (const auto& row : t.rows) {
    const std::string& sk = row[ck_src_kind];
    const std::string& dk = row[ck_dst_kind];
    int src = std::stoi(row[ck_src]);
    int dst = std::stoi(row[ck_dst]);
    double mean = std::stod(row[ck_mean]);
    double std_ = std::stod(row[ck_std]);
    double power = std::stod(row[ck_pow]);
    double cap = std::stod(row[ck_cap]);
    if (sk == "ue" && dk == "bs") {
      link_stats.ue_bs_mean(src, dst) = mean;
      link_stats.ue_bs_std(src, dst) = std_;
      links.ue_bs_power(src, dst) = power;
    } else if (sk == "bs" && dk == "ue") {
      link_stats.bs_ue_mean(src, dst) = mean;
      link_stats.bs_ue_std(src, dst) = std_;
    } else if (sk == "bs" && dk == "dc") {
      link_stats.bs_dc_mean(src, dst) = mean;
      link_stats.bs_dc_std(src, dst) = std_;
      links.bs_dc_power(src, dst) = power;
      links.bs_dc_cap(src, dst) = cap;
    } else if (sk == "dc" && dk == "dc") {
      link_stats.dc_dc_mean(src, dst) = mean;
      link_stats.dc_dc_std(src, dst) = std_;
      links.dc_dc_power(src, dst) = power;
    } else if (sk == "dc" && dk == "bs") {
      link_stats.dc_bs_mean(src, dst) = mean;
      link_stats.dc_bs_std(src, dst) = std_;
      links.dc_bs_power(src, dst) = power;
    } else {
      throw ConfigError("network CSV: unknown link kind " + sk + "->" + dk);
    }
  }
}

TomlDoc Topology::profiles_to_toml() const {
  TomlDoc doc;
  doc.set_number("network.n_ues", num_ues());
  doc.set_number("network.n_bss", num_bss());
  doc.set_number("network.n_dcs", num_dcs());
  doc.set_number("network.n0", n0);
  doc.set_number("network.beta_data", beta_data);
  doc.set_number("network.beta_model", beta_model);

  auto vec_of = [](auto&& getter, std::size_t count) {
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = getter(i);
    return v;
  };
  std::size_t N = ue_profiles.size(), B = bs_profiles.size(), S = dc_profiles.size();
  doc.set_array("ue.cycles_per_point",
                vec_of([&](std::size_t i) { return ue_profiles[i].cycles_per_point; }, N));
  doc.set_array("ue.chipset_alpha",
                vec_of([&](std::size_t i) { return ue_profiles[i].chipset_alpha; }, N));
  doc.set_array("ue.f_min", vec_of([&](std::size_t i) { return ue_profiles[i].f_min; }, N));
  doc.set_array("ue.f_max", vec_of([&](std::size_t i) { return ue_profiles[i].f_max; }, N));
  doc.set_array("bs.tx_power",
                vec_of([&](std::size_t i) { return bs_profiles[i].tx_power; }, B));
  doc.set_array("dc.machine_count",
                vec_of([&](std::size_t i) { return double(dc_profiles[i].machine_count); }, S));
  doc.set_array("dc.machine_capacity",
                vec_of([&](std::size_t i) { return dc_profiles[i].machine_capacity; }, S));
  doc.set_array("dc.peak_power",
                vec_of([&](std::size_t i) { return dc_profiles[i].peak_power; }, S));
  doc.set_array("dc.dynamic_power_fraction",
                vec_of([&](std::size_t i) { return dc_profiles[i].dynamic_power_fraction; }, S));
  doc.set_array("dc.ingress_cap",
                vec_of([&](std::size_t i) { return dc_profiles[i].ingress_cap; }, S));
  doc.set_array("subnet.ue",
                vec_of([&](std::size_t i) { return double(ue_subnet[i]); }, ue_subnet.size()));
  doc.set_array("subnet.bs",
                vec_of([&](std::size_t i) { return double(bs_subnet[i]); }, bs_subnet.size()));

  std::vector<double> edges;
  for (int i = 0; i < num_nodes(); ++i)
    for (int j = i + 1; j < num_nodes(); ++j)
      if (consensus_adjacency(i, j) != 0) {
        edges.push_back(i);
        edges.push_back(j);
      }
  doc.set_array("consensus.edges", edges);
  return doc;
}

void Topology::profiles_from_toml(const TomlDoc& doc) {
  int N = static_cast<int>(doc.number("network.n_ues"));
  int B = static_cast<int>(doc.number("network.n_bss"));
  int S = static_cast<int>(doc.number("network.n_dcs"));
  n0 = doc.number_or("network.n0", 4e-21);
  beta_data = doc.number_or("network.beta_data", 4e7);
  beta_model = doc.number_or("network.beta_model", 6272);

  auto fill = [&](const std::string& key, int count, double fallback) {
    auto v = doc.array_or(key, {});
    if (v.empty()) v.assign(count, fallback);
    if (static_cast<int>(v.size()) == 1) v.assign(count, v[0]);
    if (static_cast<int>(v.size()) != count)
      throw ConfigError("topology TOML: bad array length for " + key);
    return v;
  };

  ue_profiles.assign(N, UeProfile{});
  auto cpp = fill("ue.cycles_per_point", N, 300.0);
  auto alpha = fill("ue.chipset_alpha", N, 2e-16);
  auto fmin = fill("ue.f_min", N, 1e5);
  auto fmax = fill("ue.f_max", N, 2.3e9);
  for (int i = 0; i < N; ++i) {
    ue_profiles[i].cycles_per_point = cpp[i];
    ue_profiles[i].chipset_alpha = alpha[i];
    ue_profiles[i].f_min = fmin[i];
    ue_profiles[i].f_max = fmax[i];
  }
  bs_profiles.assign(B, BsProfile{});
  auto bpow = fill("bs.tx_power", B, 10.0);
  for (int i = 0; i < B; ++i) bs_profiles[i].tx_power = bpow[i];

  dc_profiles.assign(S, DcProfile{});
  auto mc = fill("dc.machine_count", S, 700.0);
  auto cap = fill("dc.machine_capacity", S, 5e6);
  auto pk = fill("dc.peak_power", S, 200.0);
  auto dyn = fill("dc.dynamic_power_fraction", S, 0.4);
  auto ing = fill("dc.ingress_cap", S, 45e9);
  for (int i = 0; i < S; ++i) {
    dc_profiles[i].machine_count = static_cast<int>(mc[i]);
    dc_profiles[i].machine_capacity = cap[i];
    dc_profiles[i].peak_power = pk[i];
    dc_profiles[i].dynamic_power_fraction = dyn[i];
    dc_profiles[i].ingress_cap = ing[i];
  }

  auto ue_sub = doc.array_or("subnet.ue", {});
  auto bs_sub = doc.array_or("subnet.bs", {});
  ue_subnet.assign(N, 0);
  bs_subnet.assign(B, 0);
  for (int i = 0; i < N && i < static_cast<int>(ue_sub.size()); ++i)
    ue_subnet[i] = static_cast<int>(ue_sub[i]);
  for (int i = 0; i < B && i < static_cast<int>(bs_sub.size()); ++i)
    bs_subnet[i] = static_cast<int>(bs_sub[i]);

  consensus_adjacency = Eigen::MatrixXi::Zero(N + B + S, N + B + S);
  auto edges = doc.array_or("consensus.edges", {});
  for (std::size_t i = 0; i + 1 < edges.size(); i += 2) {
    int a = static_cast<int>(edges[i]), b = static_cast<int>(edges[i + 1]);
    consensus_adjacency(a, b) = 1;
    consensus_adjacency(b, a) = 1;
  }
}

void Topology::save(const std::string& csv_path, const std::string& toml_path) const {
  write_csv_file(csv_path, links_to_csv());
  std::ofstream out(toml_path);
  if (!out) throw ConfigError("cannot write topology TOML: " + toml_path);
  out << profiles_to_toml().dump();
}

Topology Topology::load(const std::string& csv_path, const std::string& toml_path) {
  Topology topo;
  topo.profiles_from_toml(TomlDoc::parse_file(toml_path));
  topo.links_from_csv(read_csv_file(csv_path));
  return topo;
}

}  // namespace cefl
