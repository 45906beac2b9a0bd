#include "cefl/ml_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cefl {

Vec accumulation_weights(int gamma, double eta, double mu) {
  Vec a(gamma);
  double q = 1.0 - eta * mu;
  for (int l = 0; l < gamma; ++l) a(l) = std::pow(q, gamma - 1 - l);
  return a;
}

double a_norm1(double gamma, double eta, double mu) {
  if (gamma <= 0.0) return 0.0;
  double q = 1.0 - eta * mu;
  if (std::abs(1.0 - q) < 1e-12) return gamma;
  return (1.0 - std::pow(q, gamma)) / (1.0 - q);
}

double a_norm2_sq(double gamma, double eta, double mu) {
  if (gamma <= 0.0) return 0.0;
  double q = 1.0 - eta * mu;
  double q2 = q * q;
  if (std::abs(1.0 - q2) < 1e-12) return gamma;
  return (1.0 - std::pow(q2, gamma)) / (1.0 - q2);
}

double local_loss(const Model& model, const Vec& x, const DpuDataset& ds) {
  return model.mean_loss(x, ds);
}

double global_loss(const Model& model, const Vec& x, const std::vector<DpuDataset>& dss) {
  double total = 0.0, acc = 0.0;
  for (const auto& ds : dss) {
    if (ds.size() == 0) continue;
    acc += ds.size() * model.mean_loss(x, ds);
    total += ds.size();
  }
  if (total == 0.0) throw DomainError("global loss over empty datasets");
  return acc / total;
}

std::vector<int> sample_minibatch(const DpuDataset& ds, double m, Rng& rng) {
  if (!(m > 0.0 && m <= 1.0)) throw DomainError("mini-batch ratio outside (0,1]");
  int D = ds.size();
  if (D == 0) throw DomainError("mini-batch from an empty dataset");
  std::size_t want = std::min<std::size_t>(round_half_up_min1(m * D), D);
  // Floyd-style reservoir over indices keeps draws O(batch) and deterministic.
  std::vector<int> idx(D);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> out;
  out.reserve(want);
  for (std::size_t k = 0; k < want; ++k) {
    std::uniform_int_distribution<int> d(static_cast<int>(k), D - 1);
    std::swap(idx[k], idx[d(rng)]);
    out.push_back(idx[k]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

LocalTrainResult local_train(const Model& model, const Vec& x_global, const DpuDataset& ds,
                             const LocalRunConfig& cfg, const MlHyperParams& hp,
                             bool keep_history) {
  if (cfg.gamma < 0) throw DomainError("negative SGD iteration count");
  LocalTrainResult res;
  res.x_final = x_global;
  if (keep_history) res.trajectory.push_back(x_global);
  if (cfg.gamma == 0) return res;
  if (ds.size() == 0) throw DomainError("local training on an empty dataset");

  Rng rng(cfg.seed);
  Vec x = x_global;
  for (int k = 0; k < cfg.gamma; ++k) {
    auto batch = sample_minibatch(ds, cfg.m, rng);
    Vec g = model.mean_grad(x, ds, batch);
    if (keep_history) res.stochastic_grads.push_back(g);
    x -= hp.eta * (g + hp.mu * (x - x_global));
    if (keep_history) res.trajectory.push_back(x);
  }
  res.x_final = std::move(x);
  return res;
}

Vec normalized_accum_gradient(const Vec& x_global, const Vec& x_final, int gamma,
                              const MlHyperParams& hp) {
  if (x_global.size() != x_final.size())
    throw DomainError("normalized gradient: dimension mismatch");
  if (gamma == 0) return Vec::Zero(x_global.size());
  double norm1 = a_norm1(gamma, hp.eta, hp.mu);
  return (x_global - x_final) / (hp.eta * norm1);
}

Vec global_aggregate(const Vec& x_global, const std::vector<double>& data_sizes,
                     const std::vector<Vec>& normalized_grads, const MlHyperParams& hp) {
  if (data_sizes.size() != normalized_grads.size())
    throw DomainError("global aggregate: size mismatch");
  double total = std::accumulate(data_sizes.begin(), data_sizes.end(), 0.0);
  if (total <= 0.0) throw DomainError("global aggregate: no data");
  Vec acc = Vec::Zero(x_global.size());
  for (std::size_t i = 0; i < data_sizes.size(); ++i)
    if (data_sizes[i] > 0.0) acc += data_sizes[i] * normalized_grads[i];
  return x_global - hp.vartheta * hp.eta * acc / total;
}

Vec measure_drift(const Model& model, const std::vector<DpuDataset>& prev,
                  const std::vector<DpuDataset>& next, const std::vector<Vec>& probes,
                  double tau, double scale_factor) {
  if (tau <= 0.0) throw DomainError("drift estimation needs tau > 0");
  if (prev.size() != next.size()) throw DomainError("drift: DPU count mismatch");
  double d_prev = 0.0, d_next = 0.0;
  for (const auto& ds : prev) d_prev += ds.size();
  for (const auto& ds : next) d_next += ds.size();
  Vec out = Vec::Zero(static_cast<int>(prev.size()));
  for (std::size_t i = 0; i < prev.size(); ++i) {
    double worst = 0.0;
    for (const auto& x : probes) {
      double f_next =
          next[i].size() > 0 ? (next[i].size() / d_next) * model.mean_loss(x, next[i]) : 0.0;
      double f_prev =
          prev[i].size() > 0 ? (prev[i].size() / d_prev) * model.mean_loss(x, prev[i]) : 0.0;
      worst = std::max(worst, (f_next - f_prev) / tau);
    }
    out(static_cast<int>(i)) = scale_factor * std::max(worst, 0.0);
  }
  return out;
}

std::vector<Vec> make_drift_probes(int param_dim, const Vec& current_global, int count,
                                   Rng& rng) {
  std::vector<Vec> probes;
  probes.reserve(count + 1);
  probes.push_back(current_global);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < count; ++j) {
    Vec x(param_dim);
    for (int i = 0; i < param_dim; ++i) x(i) = normal(rng);
    probes.push_back(std::move(x));
  }
  return probes;
}

}  // namespace cefl
