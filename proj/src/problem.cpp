#include "cefl/problem.hpp"

#include <algorithm>
#include <cmath>

namespace cefl {

namespace {

// Geometric accumulation-weight helpers and their gamma-derivatives, valid for
// continuous gamma (q = 1 - eta*mu).
struct AccumTerms {
  double n1, n2, dn1, dn2;
};

AccumTerms accum_terms(double gamma, double eta, double mu) {
  AccumTerms t;
  double q = 1.0 - eta * mu;
  if (std::abs(1.0 - q) < 1e-12) {
    t.n1 = gamma;
    t.n2 = gamma;
    t.dn1 = 1.0;
    t.dn2 = 1.0;
    return t;
  }
  double lq = std::log(q);
  double qg = std::pow(q, gamma);
  double q2g = qg * qg;
  t.n1 = (1.0 - qg) / (1.0 - q);
  t.n2 = (1.0 - q2g) / (1.0 - q * q);
  t.dn1 = -qg * lq / (1.0 - q);
  t.dn2 = -2.0 * q2g * lq / (1.0 - q * q);
  return t;
}

}  // namespace

Problem::Problem(Topology topo, Vec ue_data, BoundParams bounds, ObjectiveWeights weights,
                 MlHyperParams hp)
    : topo_(std::move(topo)),
      ue_data_(std::move(ue_data)),
      bounds_(std::move(bounds)),
      weights_(std::move(weights)),
      hp_(hp),
      layout_(topo_) {
  topo_.validate();
  if (ue_data_.size() != topo_.num_ues())
    throw SetupError("problem: UE data vector has wrong length");
  auto positive = [](const Mat& m) { return m.size() == 0 || m.minCoeff() > 0.0; };
  if (!positive(topo_.links.ue_bs_rate) || !positive(topo_.links.bs_ue_rate) ||
      !positive(topo_.links.dc_bs_rate) || !positive(topo_.links.bs_dc_cap))
    throw SetupError("problem: topology has a dead link on a required path");
  for (int s = 0; s < topo_.num_dcs(); ++s)
    for (int s2 = 0; s2 < topo_.num_dcs(); ++s2)
      if (s != s2 && topo_.links.dc_dc_rate(s, s2) <= 0.0)
        throw SetupError("problem: dead DC-DC link");
  if (bounds_.theta.size() != layout_.N + layout_.S ||
      bounds_.sigma_sq.size() != layout_.N + layout_.S)
    throw SetupError("problem: bound params need per-DPU theta and sigma");
  build_families();
  build_equalities();
  curvature_ = Vec::Ones(mC_);
}

void Problem::build_families() {
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  families_.clear();
  int row = 0;
  auto add = [&](const std::string& name, int count) {
    families_.push_back({name, row, count});
    row += count;
  };
  add("ue_agg", N);
  add("dc_agg", S * B * N * B);
  add("bs_recv", B * N);
  add("dc_recv", S);
  add("is_binary", 1);
  add("iu_binary", N);
  add("ib_binary", N);
  mC_ = row;
}

void Problem::build_equalities() {
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  const int num_nodes = N + B + S;
  eq_rows_.clear();
  eq_anchor_.clear();
  std::vector<double> rhs;

  auto pair_row = [&](int ka, int kb, int anchor_node) {
    SparseRow r;
    r.idx = {ka, kb};
    r.val = {1.0, -1.0};
    eq_rows_.push_back(std::move(r));
    rhs.push_back(0.0);
    eq_anchor_.push_back(anchor_node);
  };

  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) pair_row(layout_.ue_rho(n, b), layout_.bs_rho_ue(b, n), n);
  for (int n = 0; n < N; ++n)
    for (int s = 0; s < S; ++s)
      for (int b = 0; b < B; ++b)
        pair_row(layout_.ue_rho(n, b), layout_.dc_rho_ue(s, n, b), n);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      pair_row(layout_.bs_rho_dc(b, s), layout_.dc_rho_dc(s, b), N + b);

  auto is_copy = [&](int node, int s) {
    if (node < N) return layout_.ue_is(node, s);
    if (node < N + B) return layout_.bs_is(node - N, s);
    return layout_.dc_is(node - N - B, s);
  };
  for (int s = 0; s < S; ++s)
    for (int d1 = 0; d1 < num_nodes; ++d1)
      for (int d2 = d1 + 1; d2 < num_nodes; ++d2)
        pair_row(is_copy(d1, s), is_copy(d2, s), d1);

  auto da_copy = [&](int node) {
    if (node < N) return layout_.ue_da(node);
    if (node < N + B) return layout_.bs_da(node - N);
    return layout_.dc_da(node - N - B);
  };
  for (int d1 = 0; d1 < num_nodes; ++d1)
    for (int d2 = d1 + 1; d2 < num_nodes; ++d2) pair_row(da_copy(d1), da_copy(d2), d1);

  auto dr_copy = [&](int node) {
    return node < N + B ? layout_.bs_dr(node - N) : layout_.dc_dr(node - N - B);
  };
  for (int d1 = N; d1 < num_nodes; ++d1)
    for (int d2 = d1 + 1; d2 < num_nodes; ++d2) pair_row(dr_copy(d1), dr_copy(d2), d1);

  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) pair_row(layout_.bs_r(b, s), layout_.dc_r(s, b), N + b);

  // Downlink association rows couple the local variables of all BSs.
  for (int n = 0; n < N; ++n) {
    SparseRow r;
    for (int b = 0; b < B; ++b) {
      r.idx.push_back(layout_.bs_ibu(b, n));
      r.val.push_back(1.0);
    }
    eq_rows_.push_back(std::move(r));
    rhs.push_back(1.0);
    eq_anchor_.push_back(N);
  }

  eq_rhs_ = Eigen::Map<Vec>(rhs.data(), rhs.size());
}

Vec Problem::equality_residuals(const Vec& w) const {
  Vec out(num_equalities());
  for (int e = 0; e < num_equalities(); ++e) out(e) = eq_rows_[e].dot(w) - eq_rhs_(e);
  return out;
}

int Problem::node_of_coord(int k) const {
  int lo = 0, hi = num_nodes() - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (layout_.nodes[mid].offset <= k)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

// ---------------------------------------------------------------------------
// Objective.

double Problem::objective_impl(const Vec& w, Vec* grad) const {
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  const auto& lk = topo_.links;
  const double betaD = topo_.beta_data, betaM = topo_.beta_model;
  const int n_copies_is = N + B + S;
  const int n_copies_da = N + B + S;
  const int n_copies_dr = B + S;
  const int n_copies_rho = 2 + S;

  // --- physical view (copies averaged, transforms undone) ---
  Mat rhoU(N, B), rhoB(B, S), R(B, S), IU(N, B), IB(B, N);
  Vec IS(S), f(N), zz(S), gam(N + S), mm(N + S);
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) {
      double acc = w(layout_.ue_rho(n, b)) + w(layout_.bs_rho_ue(b, n));
      for (int s = 0; s < S; ++s) acc += w(layout_.dc_rho_ue(s, n, b));
      rhoU(n, b) = acc / n_copies_rho;
      IU(n, b) = w(layout_.ue_iub(n, b));
    }
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      rhoB(b, s) = 0.5 * (w(layout_.bs_rho_dc(b, s)) + w(layout_.dc_rho_dc(s, b)));
      R(b, s) = 0.5 * (w(layout_.bs_r(b, s)) + w(layout_.dc_r(s, b))) * lk.bs_dc_cap(b, s);
    }
  for (int s = 0; s < S; ++s) {
    double acc = 0.0;
    for (int n = 0; n < N; ++n) acc += w(layout_.ue_is(n, s));
    for (int b = 0; b < B; ++b) acc += w(layout_.bs_is(b, s));
    for (int s2 = 0; s2 < S; ++s2) acc += w(layout_.dc_is(s2, s));
    IS(s) = acc / n_copies_is;
  }
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) IB(b, n) = w(layout_.bs_ibu(b, n));
  double dA = VariableLayout::mean_of(w, layout_.copies_da()) * layout_.delta_scale;
  double dR = VariableLayout::mean_of(w, layout_.copies_dr()) * layout_.delta_scale;
  for (int n = 0; n < N; ++n) {
    f(n) = topo_.ue_profiles[n].f_min / w(layout_.ue_u(n));
    gam(n) = w(layout_.ue_gamma(n)) * layout_.gamma_scale;
    mm(n) = w(layout_.ue_m(n));
  }
  for (int s = 0; s < S; ++s) {
    double z_floor = layout_.z_floor_frac * topo_.dc_profiles[s].machine_capacity;
    zz(s) = z_floor / w(layout_.dc_v(s));
    gam(N + s) = w(layout_.dc_gamma(s)) * layout_.gamma_scale;
    mm(N + s) = w(layout_.dc_m(s));
  }

  Vec Dn(N), Db(B), Ds(S);
  for (int n = 0; n < N; ++n) Dn(n) = (1.0 - rhoU.row(n).sum()) * ue_data_(n);
  for (int b = 0; b < B; ++b) {
    double acc = 0.0;
    for (int n = 0; n < N; ++n) acc += rhoU(n, b) * ue_data_(n);
    Db(b) = acc;
  }
  for (int s = 0; s < S; ++s) {
    double acc = 0.0;
    for (int b = 0; b < B; ++b) acc += rhoB(b, s) * Db(b);
    Ds(s) = acc;
  }
  const double Dtot = std::max(ue_data_.sum(), 1.0);

  // --- gradient sinks (chain rules back onto the expanded coordinates) ---
  auto g_rhoU = [&](int n, int b, double d) {
    if (!grad) return;
    double share = d / n_copies_rho;
    (*grad)(layout_.ue_rho(n, b)) += share;
    (*grad)(layout_.bs_rho_ue(b, n)) += share;
    for (int s = 0; s < S; ++s) (*grad)(layout_.dc_rho_ue(s, n, b)) += share;
  };
  auto g_rhoB = [&](int b, int s, double d) {
    if (!grad) return;
    (*grad)(layout_.bs_rho_dc(b, s)) += 0.5 * d;
    (*grad)(layout_.dc_rho_dc(s, b)) += 0.5 * d;
  };
  auto g_R = [&](int b, int s, double d) {
    if (!grad) return;
    double share = 0.5 * d * lk.bs_dc_cap(b, s);
    (*grad)(layout_.bs_r(b, s)) += share;
    (*grad)(layout_.dc_r(s, b)) += share;
  };
  auto g_IS = [&](int s, double d) {
    if (!grad) return;
    double share = d / n_copies_is;
    for (int n = 0; n < N; ++n) (*grad)(layout_.ue_is(n, s)) += share;
    for (int b = 0; b < B; ++b) (*grad)(layout_.bs_is(b, s)) += share;
    for (int s2 = 0; s2 < S; ++s2) (*grad)(layout_.dc_is(s2, s)) += share;
  };
  auto g_IU = [&](int n, int b, double d) {
    if (grad) (*grad)(layout_.ue_iub(n, b)) += d;
  };
  auto g_IB = [&](int b, int n, double d) {
    if (grad) (*grad)(layout_.bs_ibu(b, n)) += d;
  };
  auto g_dA = [&](double d) {
    if (!grad) return;
    double share = d * layout_.delta_scale / n_copies_da;
    for (int k : layout_.copies_da()) (*grad)(k) += share;
  };
  auto g_dR = [&](double d) {
    if (!grad) return;
    double share = d * layout_.delta_scale / n_copies_dr;
    for (int k : layout_.copies_dr()) (*grad)(k) += share;
  };
  auto g_f = [&](int n, double d) {
    if (grad) (*grad)(layout_.ue_u(n)) += d * (-f(n) * f(n) / topo_.ue_profiles[n].f_min);
  };
  auto g_z = [&](int s, double d) {
    if (!grad) return;
    double z_floor = layout_.z_floor_frac * topo_.dc_profiles[s].machine_capacity;
    (*grad)(layout_.dc_v(s)) += d * (-zz(s) * zz(s) / z_floor);
  };
  auto g_gamma = [&](int i, double d) {
    if (!grad) return;
    int k = i < N ? layout_.ue_gamma(i) : layout_.dc_gamma(i - N);
    (*grad)(k) += d * layout_.gamma_scale;
  };
  auto g_m = [&](int i, double d) {
    if (!grad) return;
    (*grad)(i < N ? layout_.ue_m(i) : layout_.dc_m(i - N)) += d;
  };
  // Chain for the data volume at DPU i.
  auto g_D = [&](int i, double d) {
    if (!grad || d == 0.0) return;
    if (i < N) {
      for (int b = 0; b < B; ++b) g_rhoU(i, b, -d * ue_data_(i));
    } else {
      int s = i - N;
      for (int b = 0; b < B; ++b) {
        g_rhoB(b, s, d * Db(b));
        for (int n = 0; n < N; ++n) g_rhoU(n, b, d * rhoB(b, s) * ue_data_(n));
      }
    }
  };

  double J = 0.0;

  // --- (a) convergence bound ---
  {
    const double ve = hp_.vartheta * hp_.eta;
    const double Kc = 16.0 * hp_.eta * bounds_.L * hp_.vartheta;
    const double Ke = 12.0 * hp_.eta * hp_.eta * bounds_.L * bounds_.L;
    const double Kd = Ke * bounds_.zeta2;
    double sum_delta = bounds_.delta.size() == N + S ? bounds_.delta.sum() : 0.0;

    double bound = 4.0 * std::max(bounds_.initial_loss - bounds_.f_star, 0.0) / ve;
    bound += 4.0 / ve * (dA + dR) * sum_delta;
    g_dA(weights_.xi1 * 4.0 / ve * sum_delta);
    g_dR(weights_.xi1 * 4.0 / ve * sum_delta);

    double h_max = 0.0;
    int h_arg = -1;
    double h_arg_grad = 0.0;
    for (int i = 0; i < N + S; ++i) {
      double Dit = i < N ? Dn(i) : Ds(i - N);
      bool d_active = Dit > 1.0;
      double Dt = std::max(Dit, 1.0);
      bool m_active = mm(i) > bounds_.m_min;
      double mt = std::max(mm(i), bounds_.m_min);
      bool g_active = gam(i) > 1e-3;
      double gt = std::max(gam(i), 1e-3);
      AccumTerms at = accum_terms(gt, hp_.eta, hp_.mu);
      double th2 = bounds_.theta(i) * bounds_.theta(i);
      double sg = bounds_.sigma_sq(i);
      double noise = (1.0 - mt) * (Dt - 1.0) * th2 * sg / (mt * Dt * Dt);
      double dnoise_dm = m_active ? -th2 * sg * (Dt - 1.0) / (mt * mt * Dt * Dt) : 0.0;
      double dnoise_dD = d_active ? (1.0 - mt) / mt * th2 * sg * (2.0 - Dt) / (Dt * Dt * Dt) : 0.0;
      double p = Dt / Dtot;
      double dp_dD = d_active ? 1.0 / Dtot : 0.0;

      double r2 = at.n2 / (at.n1 * at.n1);
      double dr2 = (at.dn2 * at.n1 - 2.0 * at.n2 * at.dn1) / (at.n1 * at.n1 * at.n1);
      bound += Kc * p * p * noise * r2;
      g_D(i, weights_.xi1 * Kc * r2 * (2.0 * p * dp_dD * noise + p * p * dnoise_dD));
      g_m(i, weights_.xi1 * Kc * r2 * p * p * dnoise_dm);
      g_gamma(i, g_active ? weights_.xi1 * Kc * p * p * noise * dr2 : 0.0);

      double s2 = at.n2 > 1.0 ? (at.n2 - 1.0) / at.n1 : 0.0;
      double ds2 =
          at.n2 > 1.0 ? (at.dn2 * at.n1 - (at.n2 - 1.0) * at.dn1) / (at.n1 * at.n1) : 0.0;
      bound += Ke * noise * p * gt * s2;
      g_D(i, weights_.xi1 * Ke * gt * s2 * (dnoise_dD * p + noise * dp_dD));
      g_m(i, weights_.xi1 * Ke * gt * s2 * p * dnoise_dm);
      g_gamma(i, g_active ? weights_.xi1 * Ke * noise * p * (s2 + gt * ds2) : 0.0);

      double h = at.n1 > 1.0 ? gt * gt * (at.n1 - 1.0) / at.n1 : 0.0;
      if (h > h_max) {
        h_max = h;
        h_arg = i;
        h_arg_grad = g_active && at.n1 > 1.0
                         ? 2.0 * gt * (at.n1 - 1.0) / at.n1 + gt * gt * at.dn1 / (at.n1 * at.n1)
                         : 0.0;
      }
    }
    bound += Kd * h_max;
    if (h_arg >= 0) g_gamma(h_arg, weights_.xi1 * Kd * h_arg_grad);
    J += weights_.xi1 * bound;
  }

  // --- (b) round delay ---
  J += weights_.xi2 * (dA + dR);
  g_dA(weights_.xi2);
  g_dR(weights_.xi2);

  const double x3 = weights_.xi3;
  const auto& sub = weights_.xi3_sub;

  // --- (c) data transfer energies ---
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) {
      double coef = betaD * ue_data_(n) / lk.ue_bs_rate(n, b) * lk.ue_bs_power(n, b);
      J += x3 * sub[0] * coef * rhoU(n, b);
      g_rhoU(n, b, x3 * sub[0] * coef);
    }
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      double coef = betaD * lk.bs_dc_power(b, s);
      double val = coef * Db(b) * rhoB(b, s) / R(b, s);
      J += x3 * sub[1] * val;
      for (int n = 0; n < N; ++n)
        g_rhoU(n, b, x3 * sub[1] * coef * ue_data_(n) * rhoB(b, s) / R(b, s));
      g_rhoB(b, s, x3 * sub[1] * coef * Db(b) / R(b, s));
      g_R(b, s, -x3 * sub[1] * val / R(b, s));
    }

  // --- (d) processing energies ---
  for (int n = 0; n < N; ++n) {
    const auto& ue = topo_.ue_profiles[n];
    double k = 0.5 * ue.chipset_alpha * ue.cycles_per_point;
    double val = k * gam(n) * mm(n) * Dn(n) * f(n) * f(n);
    J += x3 * sub[2] * val;
    g_gamma(n, x3 * sub[2] * k * mm(n) * Dn(n) * f(n) * f(n));
    g_m(n, x3 * sub[2] * k * gam(n) * Dn(n) * f(n) * f(n));
    g_D(n, x3 * sub[2] * k * gam(n) * mm(n) * f(n) * f(n));
    g_f(n, x3 * sub[2] * 2.0 * k * gam(n) * mm(n) * Dn(n) * f(n));
  }
  for (int s = 0; s < S; ++s) {
    const auto& dc = topo_.dc_profiles[s];
    double rho = dc.dynamic_power_fraction;
    double C = dc.machine_capacity;
    double pw = rho * zz(s) / (C * C) + (1.0 - rho) / zz(s);
    double dpw = rho / (C * C) - (1.0 - rho) / (zz(s) * zz(s));
    double base = dc.peak_power;
    double val = gam(N + s) * mm(N + s) * Ds(s) * base * pw;
    J += x3 * sub[3] * val;
    g_gamma(N + s, x3 * sub[3] * mm(N + s) * Ds(s) * base * pw);
    g_m(N + s, x3 * sub[3] * gam(N + s) * Ds(s) * base * pw);
    g_D(N + s, x3 * sub[3] * gam(N + s) * mm(N + s) * base * pw);
    g_z(s, x3 * sub[3] * gam(N + s) * mm(N + s) * Ds(s) * base * dpw);
  }

  // --- (e) aggregation energy ---
  {
    double w5 = x3 * sub[4];
    for (int n = 0; n < N; ++n)
      for (int b = 0; b < B; ++b) {
        double em_nb = betaM / lk.ue_bs_rate(n, b) * lk.ue_bs_power(n, b);
        J += w5 * em_nb * IU(n, b);
        g_IU(n, b, w5 * em_nb);
        for (int s = 0; s < S; ++s) {
          double coef = betaM * lk.bs_dc_power(b, s);
          double val = coef / R(b, s) * IS(s) * IU(n, b);
          J += w5 * val;
          g_IS(s, w5 * coef / R(b, s) * IU(n, b));
          g_IU(n, b, w5 * coef / R(b, s) * IS(s));
          g_R(b, s, -w5 * val / R(b, s));
        }
      }
    for (int s = 0; s < S; ++s)
      for (int s2 = 0; s2 < S; ++s2) {
        if (s == s2) continue;
        double em = betaM / lk.dc_dc_rate(s, s2) * lk.dc_dc_power(s, s2);
        J += w5 * em * IS(s2);
        g_IS(s2, w5 * em);
      }
  }

  // --- (e) reception energy ---
  {
    double w6 = x3 * sub[5];
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s) {
        double em = betaM / lk.dc_bs_rate(s, b) * lk.dc_bs_power(s, b);
        J += w6 * em * IS(s);
        g_IS(s, w6 * em);
      }
    for (int b = 0; b < B; ++b) {
      // broadcast: worst associated UE, argmax with lowest-index ties.
      double worst = 0.0;
      int arg = -1;
      for (int n = 0; n < N; ++n) {
        double v = betaM / lk.bs_ue_rate(b, n) * IB(b, n);
        if (v > worst) {
          worst = v;
          arg = n;
        }
      }
      J += w6 * topo_.bs_profiles[b].tx_power * worst;
      if (arg >= 0)
        g_IB(b, arg, w6 * topo_.bs_profiles[b].tx_power * betaM / lk.bs_ue_rate(b, arg));
    }
    for (int s = 0; s < S; ++s)
      for (int s2 = 0; s2 < S; ++s2) {
        if (s == s2) continue;
        double em = betaM / lk.dc_dc_rate(s2, s) * lk.dc_dc_power(s2, s);
        J += w6 * em * IS(s2);
        g_IS(s2, w6 * em);
      }
  }

  return J;
}

double Problem::objective(const Vec& w) const { return objective_impl(w, nullptr); }

Vec Problem::objective_gradient(const Vec& w) const {
  Vec g = Vec::Zero(dim());
  objective_impl(w, &g);
  return g;
}

BoundTerms Problem::bound_terms_physical(const DecisionVector& v) const {
  OffloadPlan plan{v.rho_ue_bs, v.rho_bs_dc, ue_data_};
  auto data = apply_offload_plan(plan);
  Vec D(layout_.N + layout_.S);
  D.head(layout_.N) = data.ue_kept;
  D.tail(layout_.S) = data.dc_total;
  return convergence_bound_terms(v.delta_a + v.delta_r, D, v.m, v.gamma, bounds_, hp_, 1);
}

// ---------------------------------------------------------------------------
// Constraints.

SparseRow StructuredGrads::materialize(int r) const {
  if (!is_dc_row(r)) return generic[r];
  SparseRow out = dc_base[group_of(r)];
  for (const auto& [coord, val] : dc_extra[r - dc_first]) {
    out.idx.push_back(coord);
    out.val.push_back(val);
  }
  return out;
}

double StructuredGrads::row_dot(int r, const Vec& x) const {
  if (!is_dc_row(r)) return generic[r].dot(x);
  double acc = dc_base[group_of(r)].dot(x);
  for (const auto& [coord, val] : dc_extra[r - dc_first]) acc += val * x(coord);
  return acc;
}

void Problem::eval_constraints(const Vec& w, Vec* values, StructuredGrads* grads) const {
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  const auto& lk = topo_.links;
  const double betaD = topo_.beta_data, betaM = topo_.beta_model;
  const double dscale = layout_.delta_scale;
  const double gscale = layout_.gamma_scale;
  if (values) values->resize(mC_);
  if (grads) {
    grads->total_rows = mC_;
    grads->generic.assign(mC_, SparseRow{});
    grads->dc_base.clear();
    grads->dc_group_node.clear();
    grads->dc_extra.clear();
    grads->dc_first = families_[1].first_row;
    grads->dc_rows_per_group = N * B;
    grads->dc_extra.resize(families_[1].count);
  }
  int row = 0;
  auto emit = [&](double val, SparseRow&& g) {
    if (values) (*values)(row) = val;
    if (grads) grads->generic[row] = std::move(g);
    ++row;
  };

  // --- F1: UE aggregation paths, anchored at each UE ---
  for (int n = 0; n < N; ++n) {
    const auto& ue = topo_.ue_profiles[n];
    double rho_sum = 0.0;
    for (int b = 0; b < B; ++b) rho_sum += w(layout_.ue_rho(n, b));
    double Dn = (1.0 - rho_sum) * ue_data_(n);
    double u = w(layout_.ue_u(n));
    double gm = w(layout_.ue_gamma(n)) * gscale;
    double m = w(layout_.ue_m(n));
    double proc = ue.cycles_per_point * gm * m * Dn * u / ue.f_min;
    double val = proc - w(layout_.ue_da(n)) * dscale;

    SparseRow g;
    if (grads) {
      g.idx.reserve(2 * B + S + B * S + 4);
    }
    auto push = [&](int k, double v) {
      if (!grads) return;
      g.idx.push_back(k);
      g.val.push_back(v);
    };
    for (int b = 0; b < B; ++b) {
      double iu = w(layout_.ue_iub(n, b));
      double dm_nb = betaM / lk.ue_bs_rate(n, b);
      val += dm_nb * iu;
      double diu = dm_nb;
      for (int s = 0; s < S; ++s) {
        double is = w(layout_.ue_is(n, s));
        double rhat = w(layout_.bs_r(b, s));
        double rphys = rhat * lk.bs_dc_cap(b, s);
        double dm_bs = betaM / rphys;
        val += dm_bs * is * iu;
        diu += dm_bs * is;
        push(layout_.bs_r(b, s), -dm_bs / rhat * is * iu);
      }
      push(layout_.ue_iub(n, b), diu);
      push(layout_.ue_rho(n, b), -ue.cycles_per_point * gm * m * u / ue.f_min * ue_data_(n));
    }
    for (int s = 0; s < S; ++s) {
      double dis = 0.0;
      for (int b = 0; b < B; ++b)
        dis += betaM / (w(layout_.bs_r(b, s)) * lk.bs_dc_cap(b, s)) * w(layout_.ue_iub(n, b));
      push(layout_.ue_is(n, s), dis);
    }
    push(layout_.ue_u(n), ue.cycles_per_point * gm * m * Dn / ue.f_min);
    push(layout_.ue_gamma(n), ue.cycles_per_point * m * Dn * u / ue.f_min * gscale);
    push(layout_.ue_m(n), ue.cycles_per_point * gm * Dn * u / ue.f_min);
    push(layout_.ue_da(n), -dscale);
    emit(val, std::move(g));
  }

  // --- F2: DC aggregation paths, one smooth row per (s, b', n, b). The
  // original 1/R form is cleared by the (positive) scaled rate so curvature
  // stays bounded on the box. Anchored entirely at each DC. ---
  for (int s = 0; s < S; ++s) {
    const auto& dc = topo_.dc_profiles[s];
    double z_floor = layout_.z_floor_frac * dc.machine_capacity;
    double vhat = w(layout_.dc_v(s));
    double gm = w(layout_.dc_gamma(s)) * gscale;
    double m = w(layout_.dc_m(s));

    Vec DbS(B), rhoBcol(B);
    for (int b = 0; b < B; ++b) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n) acc += w(layout_.dc_rho_ue(s, n, b)) * ue_data_(n);
      DbS(b) = acc;
      rhoBcol(b) = w(layout_.dc_rho_dc(s, b));
    }
    double DsS = DbS.dot(rhoBcol);
    double proc_coef = 1.0 / (dc.machine_count * z_floor);
    double proc = gm * m * DsS * vhat * proc_coef;
    double agg = 0.0;
    for (int s2 = 0; s2 < S; ++s2)
      if (s2 != s) agg += betaM / lk.dc_dc_rate(s, s2) * w(layout_.dc_is(s, s2));
    double Q = proc + agg - w(layout_.dc_da(s)) * dscale;

    for (int bp = 0; bp < B; ++bp) {
      double t1 = betaD / lk.bs_dc_cap(bp, s);
      double base_val = t1 * DbS(bp) * rhoBcol(bp);
      double rhat = w(layout_.dc_r(s, bp));

      // Base gradient shared by the (n, b) expansion; each row adds its
      // UE->BS delay term to the d/dRhat entry and one rho entry.
      if (grads) {
        SparseRow base;
        base.idx.reserve(N * B + B + S + 5);
        for (int n = 0; n < N; ++n)
          for (int b = 0; b < B; ++b) {
            double gv = rhat * gm * m * vhat * proc_coef * rhoBcol(b) * ue_data_(n);
            if (b == bp) gv += t1 * rhoBcol(bp) * ue_data_(n);
            base.idx.push_back(layout_.dc_rho_ue(s, n, b));
            base.val.push_back(gv);
          }
        for (int b = 0; b < B; ++b) {
          double gv = rhat * gm * m * vhat * proc_coef * DbS(b);
          if (b == bp) gv += t1 * DbS(bp);
          base.idx.push_back(layout_.dc_rho_dc(s, b));
          base.val.push_back(gv);
        }
        for (int s2 = 0; s2 < S; ++s2)
          if (s2 != s) {
            base.idx.push_back(layout_.dc_is(s, s2));
            base.val.push_back(rhat * betaM / lk.dc_dc_rate(s, s2));
          }
        base.idx.push_back(layout_.dc_da(s));
        base.val.push_back(-rhat * dscale);
        base.idx.push_back(layout_.dc_v(s));
        base.val.push_back(rhat * gm * m * DsS * proc_coef);
        base.idx.push_back(layout_.dc_gamma(s));
        base.val.push_back(rhat * m * DsS * vhat * proc_coef * gscale);
        base.idx.push_back(layout_.dc_m(s));
        base.val.push_back(rhat * gm * DsS * vhat * proc_coef);
        base.idx.push_back(layout_.dc_r(s, bp));
        base.val.push_back(Q);
        grads->dc_base.push_back(std::move(base));
        grads->dc_group_node.push_back(N + B + s);
      }

      for (int n = 0; n < N; ++n)
        for (int b = 0; b < B; ++b) {
          double dnb = betaD * ue_data_(n) * w(layout_.dc_rho_ue(s, n, b)) / lk.ue_bs_rate(n, b);
          double val = base_val + rhat * (dnb + Q);
          if (grads) {
            auto& extra = grads->dc_extra[row - grads->dc_first];
            extra[0] = {layout_.dc_r(s, bp), dnb};  // adds to the base Q entry
            extra[1] = {layout_.dc_rho_ue(s, n, b),
                        rhat * betaD * ue_data_(n) / lk.ue_bs_rate(n, b)};
          }
          if (values) (*values)(row) = val;
          ++row;
        }
    }
  }

  // --- F3: BS reception + broadcast rows, anchored at each BS ---
  for (int b = 0; b < B; ++b) {
    double recv = 0.0;
    for (int s = 0; s < S; ++s)
      recv += betaM / lk.dc_bs_rate(s, b) * w(layout_.bs_is(b, s));
    for (int n = 0; n < N; ++n) {
      double coef = betaM / lk.bs_ue_rate(b, n);
      double val = recv + coef * w(layout_.bs_ibu(b, n)) - w(layout_.bs_dr(b)) * dscale;
      SparseRow g;
      if (grads) {
        for (int s = 0; s < S; ++s) {
          g.idx.push_back(layout_.bs_is(b, s));
          g.val.push_back(betaM / lk.dc_bs_rate(s, b));
        }
        g.idx.push_back(layout_.bs_ibu(b, n));
        g.val.push_back(coef);
        g.idx.push_back(layout_.bs_dr(b));
        g.val.push_back(-dscale);
      }
      emit(val, std::move(g));
    }
  }

  // --- F4: DC reception rows ---
  for (int s = 0; s < S; ++s) {
    double val = -w(layout_.dc_dr(s)) * dscale;
    SparseRow g;
    for (int s2 = 0; s2 < S; ++s2) {
      if (s2 == s) continue;
      double coef = betaM / lk.dc_dc_rate(s2, s);
      val += coef * w(layout_.dc_is(s, s2));
      if (grads) {
        g.idx.push_back(layout_.dc_is(s, s2));
        g.val.push_back(coef);
      }
    }
    if (grads) {
      g.idx.push_back(layout_.dc_dr(s));
      g.val.push_back(-dscale);
    }
    emit(val, std::move(g));
  }

  // --- F5: aggregator indicator binary forcing (averaged copies) ---
  {
    const int n_nodes = N + B + S;
    double val = 0.0;
    SparseRow g;
    for (int s = 0; s < S; ++s) {
      auto copies = layout_.copies_is(s);
      double mean = VariableLayout::mean_of(w, copies);
      val += mean * (1.0 - mean);
      if (grads) {
        double share = (1.0 - 2.0 * mean) / n_nodes;
        for (int k : copies) {
          g.idx.push_back(k);
          g.val.push_back(share);
        }
      }
    }
    emit(val, std::move(g));
  }

  // --- F6 / F7: association binary forcing ---
  for (int n = 0; n < N; ++n) {
    double val = 0.0;
    SparseRow g;
    for (int b = 0; b < B; ++b) {
      double x = w(layout_.ue_iub(n, b));
      val += x * (1.0 - x);
      if (grads) {
        g.idx.push_back(layout_.ue_iub(n, b));
        g.val.push_back(1.0 - 2.0 * x);
      }
    }
    emit(val, std::move(g));
  }
  for (int n = 0; n < N; ++n) {
    double val = 0.0;
    SparseRow g;
    for (int b = 0; b < B; ++b) {
      double x = w(layout_.bs_ibu(b, n));
      val += x * (1.0 - x);
      if (grads) {
        g.idx.push_back(layout_.bs_ibu(b, n));
        g.val.push_back(1.0 - 2.0 * x);
      }
    }
    emit(val, std::move(g));
  }

  if (row != mC_) throw SolverError("constraint row count mismatch");
}

Vec Problem::constraint_values(const Vec& w) const {
  Vec v;
  eval_constraints(w, &v, nullptr);
  return v;
}

StructuredGrads Problem::constraint_gradients_structured(const Vec& w) const {
  StructuredGrads g;
  eval_constraints(w, nullptr, &g);
  return g;
}

std::vector<SparseRow> Problem::constraint_gradients(const Vec& w) const {
  StructuredGrads g = constraint_gradients_structured(w);
  std::vector<SparseRow> rows(mC_);
  for (int r = 0; r < mC_; ++r) rows[r] = g.materialize(r);
  return rows;
}

void Problem::estimate_curvature(Rng& rng, int samples, double h, double safety) {
  Vec maxcurv = Vec::Zero(mC_);
  std::uniform_int_distribution<int> node_pick(0, num_nodes() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v0, vp, vm;
  for (int it = 0; it < samples; ++it) {
    Vec w = sample_feasible(rng);
    eval_constraints(w, &v0, nullptr);
    for (int rep = 0; rep < 3; ++rep) {
      const auto& slice = layout_.nodes[node_pick(rng)];
      Vec u = Vec::Zero(dim());
      for (int k = 0; k < slice.dim; ++k) u(slice.offset + k) = normal(rng);
      double norm = u.norm();
      if (norm == 0.0) continue;
      u /= norm;
      eval_constraints(w + h * u, &vp, nullptr);
      eval_constraints(w - h * u, &vm, nullptr);
      for (int r = 0; r < mC_; ++r) {
        double c = std::abs(vp(r) - 2.0 * v0(r) + vm(r)) / (h * h);
        if (c > maxcurv(r)) maxcurv(r) = c;
      }
    }
  }
  // One shared constant per family, scaled by the safety factor.
  curvature_ = Vec::Zero(mC_);
  for (const auto& fam : families_) {
    double worst = 0.0;
    for (int r = fam.first_row; r < fam.first_row + fam.count; ++r)
      worst = std::max(worst, maxcurv(r));
    for (int r = fam.first_row; r < fam.first_row + fam.count; ++r)
      curvature_(r) = safety * worst;
  }
}

// ---------------------------------------------------------------------------
// Initial point and feasibility.

DecisionVector Problem::initial_point() const {
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  DecisionVector v = DecisionVector::zeros(N, B, S);
  v.rho_ue_bs.setConstant(1.0 / (2.0 * B));
  v.rho_bs_dc.setConstant(1.0 / S);
  for (int n = 0; n < N; ++n) {
    const auto& ue = topo_.ue_profiles[n];
    v.f(n) = 0.5 * (ue.f_min + ue.f_max);
    v.gamma(n) = 5.0;
    v.m(n) = 0.5;
  }
  for (int s = 0; s < S; ++s) {
    v.z(s) = 0.5 * topo_.dc_profiles[s].machine_capacity;
    v.gamma(N + s) = 5.0;
    v.m(N + s) = 0.5;
  }

  OffloadPlan plan{v.rho_ue_bs, v.rho_bs_dc, ue_data_};
  auto data = apply_offload_plan(plan);
  int richest = 0;
  for (int s = 1; s < S; ++s)
    if (data.dc_total(s) > data.dc_total(richest)) richest = s;
  v.i_dc(richest) = 1.0;

  for (int n = 0; n < N; ++n) {
    int best_up = 0, best_down = 0;
    for (int b = 1; b < B; ++b) {
      if (topo_.links.ue_bs_rate(n, b) > topo_.links.ue_bs_rate(n, best_up)) best_up = b;
      if (topo_.links.bs_ue_rate(b, n) > topo_.links.bs_ue_rate(best_down, n)) best_down = b;
    }
    v.i_ue_bs(n, best_up) = 1.0;
    v.i_bs_ue(best_down, n) = 1.0;
  }

  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) {
      double cap = topo_.links.bs_dc_cap(b, s);
      double r = std::min(cap, topo_.dc_profiles[s].ingress_cap / B);
      v.r_bs_dc(b, s) = std::max(r, layout_.r_floor_frac * cap);
    }
  for (int s = 0; s < S; ++s)
    if (v.r_bs_dc.col(s).sum() > topo_.dc_profiles[s].ingress_cap + 1e-9)
      throw SetupError("initial point: rate floor exceeds the DC ingress cap");

  MlSettings ml{v.gamma, v.m, v.f, v.z};
  AggregationIndicators ind{v.i_dc, v.i_ue_bs, v.i_bs_ue};
  CostLedger led = round_cost(topo_, plan, ind, ml, &v.r_bs_dc);
  v.delta_a = led.agg_delay;
  v.delta_r = led.recv_delay;
  return v;
}

FeasibilityReport Problem::feasibility_check(const DecisionVector& v, double tol) const {
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  FeasibilityReport rep;
  auto flag = [&](const std::string& name, double residual) {
    if (residual > tol) rep.violations.push_back({name, residual});
  };

  // Boxes and row sums.
  for (int n = 0; n < N; ++n) {
    flag("rho_ue_bs row sum, UE " + std::to_string(n), v.rho_ue_bs.row(n).sum() - 1.0);
    for (int b = 0; b < B; ++b) {
      flag("rho_ue_bs >= 0", -v.rho_ue_bs(n, b));
      flag("rho_ue_bs <= 1", v.rho_ue_bs(n, b) - 1.0);
      flag("i_ue_bs in [0,1]", std::max(-v.i_ue_bs(n, b), v.i_ue_bs(n, b) - 1.0));
    }
    flag("i_ue_bs row sum, UE " + std::to_string(n),
         std::abs(v.i_ue_bs.row(n).sum() - 1.0));
    flag("i_bs_ue column sum, UE " + std::to_string(n),
         std::abs(v.i_bs_ue.col(n).sum() - 1.0));
    flag("f below f_min, UE " + std::to_string(n), topo_.ue_profiles[n].f_min - v.f(n));
    flag("f above f_max, UE " + std::to_string(n), v.f(n) - topo_.ue_profiles[n].f_max);
  }
  for (int b = 0; b < B; ++b) {
    flag("rho_bs_dc row sum, BS " + std::to_string(b),
         std::abs(v.rho_bs_dc.row(b).sum() - 1.0));
    for (int s = 0; s < S; ++s) {
      flag("rho_bs_dc >= 0", -v.rho_bs_dc(b, s));
      flag("rho_bs_dc <= 1", v.rho_bs_dc(b, s) - 1.0);
      flag("r_bs_dc >= 0", -v.r_bs_dc(b, s));
    }
  }
  for (int s = 0; s < S; ++s) {
    flag("z above C_s, DC " + std::to_string(s),
         v.z(s) - topo_.dc_profiles[s].machine_capacity);
    flag("z must be positive, DC " + std::to_string(s), -v.z(s) + 1e-12);
  }
  for (int i = 0; i < N + S; ++i) {
    flag("gamma >= 0", -v.gamma(i));
    flag("m in [0,1]", std::max(-v.m(i), v.m(i) - 1.0));
  }
  flag("delta_a >= 0", -v.delta_a);
  flag("delta_r >= 0", -v.delta_r);
  flag("aggregator sum", std::abs(v.i_dc.sum() - 1.0));
  for (int s = 0; s < S; ++s)
    flag("i_dc in [0,1]", std::max(-v.i_dc(s), v.i_dc(s) - 1.0));

  for (const auto& violation : check_capacity(topo_, v.r_bs_dc, tol))
    rep.violations.push_back({violation.what, violation.residual});

  // Delay envelopes and binary-forcing rows via the expanded constraint set.
  Vec w = layout_.pack(v, topo_);
  Vec c = constraint_values(w);
  for (const auto& fam : families_) {
    for (int r = fam.first_row; r < fam.first_row + fam.count; ++r)
      flag(fam.name + " row " + std::to_string(r - fam.first_row), c(r));
  }
  return rep;
}

void Problem::freeze_indicators(const DecisionVector& v) { frozen_ = v; }

std::vector<VariableLayout::SetBlock> Problem::node_sets(int node) const {
  auto blocks = layout_.node_sets(topo_, node);
  if (!frozen_) return blocks;
  const int N = layout_.N, B = layout_.B, S = layout_.S;
  const auto& slice = layout_.nodes[node];
  auto freeze_block = [&](int offset, int size, auto value_at) {
    for (auto& blk : blocks) {
      if (blk.offset != offset) continue;
      blk.set.kind = SetDescriptor::Kind::Box;
      blk.set.lo = Vec(size);
      for (int j = 0; j < size; ++j) blk.set.lo(j) = value_at(j);
      blk.set.hi = blk.set.lo;
      break;
    }
  };
  if (slice.kind == NodeKind::Ue) {
    int n = slice.id;
    freeze_block(layout_.ue_iub(n, 0), B, [&](int b) { return frozen_->i_ue_bs(n, b); });
    freeze_block(layout_.ue_is(n, 0), S, [&](int s) { return frozen_->i_dc(s); });
  } else if (slice.kind == NodeKind::Bs) {
    int b = slice.id;
    freeze_block(layout_.bs_ibu(b, 0), N, [&](int n) { return frozen_->i_bs_ue(b, n); });
    freeze_block(layout_.bs_is(b, 0), S, [&](int s) { return frozen_->i_dc(s); });
  } else {
    int s = slice.id;
    freeze_block(layout_.dc_is(s, 0), S, [&](int s2) { return frozen_->i_dc(s2); });
  }
  return blocks;
}

Vec Problem::project_node_sets(const Vec& w) const {
  if (!frozen_) return layout_.project_node_sets(topo_, w);
  Vec out = w;
  for (int node = 0; node < num_nodes(); ++node) {
    for (const auto& blk : node_sets(node)) {
      Vec seg = out.segment(blk.offset, blk.size);
      if (blk.set.kind == SetDescriptor::Kind::CappedSum) {
        int s = layout_.nodes[node].id;
        Vec phys(blk.size);
        for (int b = 0; b < blk.size; ++b) phys(b) = seg(b) * topo_.links.bs_dc_cap(b, s);
        phys = project_capped_sum(phys, blk.set.lo, blk.set.hi, blk.set.total);
        for (int b = 0; b < blk.size; ++b) seg(b) = phys(b) / topo_.links.bs_dc_cap(b, s);
        out.segment(blk.offset, blk.size) = seg;
      } else {
        out.segment(blk.offset, blk.size) = project_feasible(seg, blk.set);
      }
    }
  }
  return out;
}

}  // namespace cefl
