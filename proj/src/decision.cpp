#include "cefl/decision.hpp"

namespace cefl {

DecisionVector DecisionVector::zeros(int N, int B, int S) {
  DecisionVector v;
  v.rho_ue_bs = Mat::Zero(N, B);
  v.rho_bs_dc = Mat::Zero(B, S);
  v.f = Vec::Zero(N);
  v.z = Vec::Zero(S);
  v.gamma = Vec::Zero(N + S);
  v.m = Vec::Zero(N + S);
  v.i_dc = Vec::Zero(S);
  v.i_ue_bs = Mat::Zero(N, B);
  v.i_bs_ue = Mat::Zero(B, N);
  v.r_bs_dc = Mat::Zero(B, S);
  return v;
}

VariableLayout::VariableLayout(const Topology& topo, double gamma_cap_, double delta_scale_,
                               double delta_max_, double r_floor_frac_, double z_floor_frac_)
    : N(topo.num_ues()),
      B(topo.num_bss()),
      S(topo.num_dcs()),
      gamma_cap(gamma_cap_),
      gamma_scale(10.0),
      delta_scale(delta_scale_),
      delta_max(delta_max_),
      r_floor_frac(r_floor_frac_),
      z_floor_frac(z_floor_frac_) {
  int off = 0;
  for (int n = 0; n < N; ++n) {
    nodes.push_back({NodeKind::Ue, n, off, 2 * B + S + 4});
    off += nodes.back().dim;
  }
  for (int b = 0; b < B; ++b) {
    nodes.push_back({NodeKind::Bs, b, off, 2 * N + 2 * S + 2 + S});
    off += nodes.back().dim;
  }
  for (int s = 0; s < S; ++s) {
    nodes.push_back({NodeKind::Dc, s, off, N * B + 2 * B + S + 5});
    off += nodes.back().dim;
  }
  total_dim = off;
}

std::vector<int> VariableLayout::copies_rho_ue(int n, int b) const {
  std::vector<int> idx = {ue_rho(n, b), bs_rho_ue(b, n)};
  for (int s = 0; s < S; ++s) idx.push_back(dc_rho_ue(s, n, b));
  return idx;
}

std::vector<int> VariableLayout::copies_rho_dc(int b, int s) const {
  return {bs_rho_dc(b, s), dc_rho_dc(s, b)};
}

std::vector<int> VariableLayout::copies_is(int s) const {
  std::vector<int> idx;
  for (int n = 0; n < N; ++n) idx.push_back(ue_is(n, s));
  for (int b = 0; b < B; ++b) idx.push_back(bs_is(b, s));
  for (int s2 = 0; s2 < S; ++s2) idx.push_back(dc_is(s2, s));
  return idx;
}

std::vector<int> VariableLayout::copies_da() const {
  std::vector<int> idx;
  for (int n = 0; n < N; ++n) idx.push_back(ue_da(n));
  for (int b = 0; b < B; ++b) idx.push_back(bs_da(b));
  for (int s = 0; s < S; ++s) idx.push_back(dc_da(s));
  return idx;
}

std::vector<int> VariableLayout::copies_dr() const {
  std::vector<int> idx;
  for (int b = 0; b < B; ++b) idx.push_back(bs_dr(b));
  for (int s = 0; s < S; ++s) idx.push_back(dc_dr(s));
  return idx;
}

std::vector<int> VariableLayout::copies_r(int b, int s) const {
  return {bs_r(b, s), dc_r(s, b)};
}

double VariableLayout::mean_of(const Vec& w, const std::vector<int>& idx) {
  double acc = 0.0;
  for (int k : idx) acc += w(k);
  return acc / static_cast<double>(idx.size());
}

Vec VariableLayout::pack(const DecisionVector& v, const Topology& topo) const {
  Vec w = Vec::Zero(total_dim);
  auto set_all = [&](const std::vector<int>& idx, double value) {
    for (int k : idx) w(k) = value;
  };
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) set_all(copies_rho_ue(n, b), v.rho_ue_bs(n, b));
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) set_all(copies_rho_dc(b, s), v.rho_bs_dc(b, s));
  for (int s = 0; s < S; ++s) set_all(copies_is(s), v.i_dc(s));
  set_all(copies_da(), v.delta_a / delta_scale);
  set_all(copies_dr(), v.delta_r / delta_scale);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      set_all(copies_r(b, s), v.r_bs_dc(b, s) / topo.links.bs_dc_cap(b, s));
  for (int n = 0; n < N; ++n) {
    for (int b = 0; b < B; ++b) w(ue_iub(n, b)) = v.i_ue_bs(n, b);
    w(ue_u(n)) = topo.ue_profiles[n].f_min / v.f(n);
    w(ue_gamma(n)) = v.gamma(n) / gamma_scale;
    w(ue_m(n)) = v.m(n);
  }
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) w(bs_ibu(b, n)) = v.i_bs_ue(b, n);
  for (int s = 0; s < S; ++s) {
    double z_floor = z_floor_frac * topo.dc_profiles[s].machine_capacity;
    w(dc_v(s)) = z_floor / v.z(s);
    w(dc_gamma(s)) = v.gamma(N + s) / gamma_scale;
    w(dc_m(s)) = v.m(N + s);
  }
  return w;
}

DecisionVector VariableLayout::unpack(const Vec& w, const Topology& topo) const {
  DecisionVector v = DecisionVector::zeros(N, B, S);
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b) v.rho_ue_bs(n, b) = mean_of(w, copies_rho_ue(n, b));
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s) v.rho_bs_dc(b, s) = mean_of(w, copies_rho_dc(b, s));
  for (int s = 0; s < S; ++s) v.i_dc(s) = mean_of(w, copies_is(s));
  v.delta_a = mean_of(w, copies_da()) * delta_scale;
  v.delta_r = mean_of(w, copies_dr()) * delta_scale;
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      v.r_bs_dc(b, s) = mean_of(w, copies_r(b, s)) * topo.links.bs_dc_cap(b, s);
  for (int n = 0; n < N; ++n) {
    for (int b = 0; b < B; ++b) v.i_ue_bs(n, b) = w(ue_iub(n, b));
    v.f(n) = topo.ue_profiles[n].f_min / w(ue_u(n));
    v.gamma(n) = w(ue_gamma(n)) * gamma_scale;
    v.m(n) = w(ue_m(n));
  }
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) v.i_bs_ue(b, n) = w(bs_ibu(b, n));
  for (int s = 0; s < S; ++s) {
    double z_floor = z_floor_frac * topo.dc_profiles[s].machine_capacity;
    v.z(s) = z_floor / w(dc_v(s));
    v.gamma(N + s) = w(dc_gamma(s)) * gamma_scale;
    v.m(N + s) = w(dc_m(s));
  }
  return v;
}

std::vector<VariableLayout::SetBlock> VariableLayout::node_sets(const Topology& topo,
                                                                int node) const {
  std::vector<SetBlock> blocks;
  const NodeSlice& slice = nodes[node];
  auto box = [&](int offset, int size, double lo, double hi) {
    SetDescriptor d;
    d.kind = SetDescriptor::Kind::Box;
    d.lo = Vec::Constant(size, lo);
    d.hi = Vec::Constant(size, hi);
    blocks.push_back({offset, size, std::move(d)});
  };
  auto simplex = [&](int offset, int size, bool eq) {
    SetDescriptor d;
    d.kind = eq ? SetDescriptor::Kind::SimplexEq : SetDescriptor::Kind::SimplexLe;
    d.total = 1.0;
    blocks.push_back({offset, size, std::move(d)});
  };

  double dmax = delta_max / delta_scale;
  if (slice.kind == NodeKind::Ue) {
    int n = slice.id;
    simplex(ue_rho(n, 0), B, false);
    simplex(ue_iub(n, 0), B, true);
    simplex(ue_is(n, 0), S, true);
    box(ue_da(n), 1, 0.0, dmax);
    box(ue_u(n), 1, topo.ue_profiles[n].f_min / topo.ue_profiles[n].f_max, 1.0);
    box(ue_gamma(n), 1, 0.0, gamma_cap / gamma_scale);
    box(ue_m(n), 1, 0.0, 1.0);
  } else if (slice.kind == NodeKind::Bs) {
    int b = slice.id;
    box(bs_rho_ue(b, 0), N, 0.0, 1.0);
    simplex(bs_rho_dc(b, 0), S, true);
    box(bs_ibu(b, 0), N, 0.0, 1.0);
    simplex(bs_is(b, 0), S, true);
    box(bs_da(b), 1, 0.0, dmax);
    box(bs_dr(b), 1, 0.0, dmax);
    box(bs_r(b, 0), S, r_floor_frac, 1.0);
  } else {
    int s = slice.id;
    for (int n = 0; n < N; ++n) simplex(dc_rho_ue(s, n, 0), B, false);
    box(dc_rho_dc(s, 0), B, 0.0, 1.0);
    simplex(dc_is(s, 0), S, true);
    box(dc_da(s), 1, 0.0, dmax);
    box(dc_dr(s), 1, 0.0, dmax);
    // Deployed rates: the ingress cap couples the column held at this DC. The
    // descriptor keeps physical units (bps); projection converts from the
    // cap-scaled coordinates.
    {
      SetDescriptor d;
      d.kind = SetDescriptor::Kind::CappedSum;
      d.lo = Vec(B);
      d.hi = Vec(B);
      for (int b = 0; b < B; ++b) {
        d.lo(b) = r_floor_frac * topo.links.bs_dc_cap(b, s);
        d.hi(b) = topo.links.bs_dc_cap(b, s);
      }
      d.total = topo.dc_profiles[s].ingress_cap;
      blocks.push_back({dc_r(s, 0), B, std::move(d)});
    }
    box(dc_v(s), 1, z_floor_frac, 1.0);
    box(dc_gamma(s), 1, 0.0, gamma_cap / gamma_scale);
    box(dc_m(s), 1, 0.0, 1.0);
  }
  return blocks;
}

namespace {

// The DC rate block is stored scaled by per-link caps but its descriptor is in
// physical units; convert, project, convert back.
Vec project_block(const Vec& x, const VariableLayout::SetBlock& blk, const Topology& topo,
                  const VariableLayout& layout, int node) {
  if (blk.set.kind != SetDescriptor::Kind::CappedSum) return project_feasible(x, blk.set);
  int s = layout.nodes[node].id;
  Vec phys(x.size());
  for (int b = 0; b < x.size(); ++b) phys(b) = x(b) * topo.links.bs_dc_cap(b, s);
  phys = project_capped_sum(phys, blk.set.lo, blk.set.hi, blk.set.total);
  Vec out(x.size());
  for (int b = 0; b < x.size(); ++b) out(b) = phys(b) / topo.links.bs_dc_cap(b, s);
  return out;
}

}  // namespace

Vec VariableLayout::project_node_sets(const Topology& topo, const Vec& w) const {
  Vec out = w;
  for (int node = 0; node < static_cast<int>(nodes.size()); ++node) {
    for (const auto& blk : node_sets(topo, node)) {
      Vec seg = out.segment(blk.offset, blk.size);
      out.segment(blk.offset, blk.size) = project_block(seg, blk, topo, *this, node);
    }
  }
  return out;
}

Vec VariableLayout::sample_feasible(const Topology& topo, Rng& rng) const {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec w(total_dim);
  for (int k = 0; k < total_dim; ++k) w(k) = uni(rng);
  // Stretch delay coordinates over their box before projecting.
  for (int node = 0; node < static_cast<int>(nodes.size()); ++node)
    for (const auto& blk : node_sets(topo, node))
      if (blk.set.kind == SetDescriptor::Kind::Box)
        for (int j = 0; j < blk.size; ++j) {
          double lo = blk.set.lo(j), hi = blk.set.hi(j);
          w(blk.offset + j) = lo + w(blk.offset + j) * (hi - lo);
        }
  return project_node_sets(topo, w);
}

}  // namespace cefl
