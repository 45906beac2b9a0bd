#pragma once

#include <vector>

#include "cefl/model.hpp"

namespace cefl {

struct MlHyperParams {
  double eta = 0.001;     // local step size
  double mu = 0.01;       // proximal regularization weight
  double vartheta = 0.01; // global update scaling
};

struct LocalRunConfig {
  int gamma = 5;       // SGD iteration count (solver's continuous value ceil'd)
  double m = 0.5;      // mini-batch ratio in (0,1]
  std::uint64_t seed = 0;
};

struct LocalTrainResult {
  Vec x_final;
  std::vector<Vec> trajectory;        // x^{(t,0)} .. x^{(t,gamma)}
  std::vector<Vec> stochastic_grads;  // per-step mini-batch gradients of F_i
};

// Accumulation weights a_{i,l} = (1 - eta*mu)^{gamma-1-l}, l = 0..gamma-1.
Vec accumulation_weights(int gamma, double eta, double mu);
// Closed forms valid for continuous gamma (geometric sums; the mu = 0 limit is
// handled explicitly).
double a_norm1(double gamma, double eta, double mu);
double a_norm2_sq(double gamma, double eta, double mu);

double local_loss(const Model& model, const Vec& x, const DpuDataset& ds);
// Data-size-weighted mean loss over all DPUs' datasets.
double global_loss(const Model& model, const Vec& x, const std::vector<DpuDataset>& dss);

// Uniform sampling without replacement; size = round-half-up(m*D), at least 1.
std::vector<int> sample_minibatch(const DpuDataset& ds, double m, Rng& rng);

LocalTrainResult local_train(const Model& model, const Vec& x_global, const DpuDataset& ds,
                             const LocalRunConfig& cfg, const MlHyperParams& hp,
                             bool keep_history = false);

// d_i = (x_global - x_final) / (eta * ||a_i||_1); zero vector when gamma = 0.
Vec normalized_accum_gradient(const Vec& x_global, const Vec& x_final, int gamma,
                              const MlHyperParams& hp);

Vec global_aggregate(const Vec& x_global, const std::vector<double>& data_sizes,
                     const std::vector<Vec>& normalized_grads, const MlHyperParams& hp);

// Sampled estimate of the per-unit-time drift of the fractional local losses
// (Definition-style quantity), clipped at zero and inflated by scale_factor.
Vec measure_drift(const Model& model, const std::vector<DpuDataset>& prev,
                  const std::vector<DpuDataset>& next, const std::vector<Vec>& probes,
                  double tau, double scale_factor = 1.5);

std::vector<Vec> make_drift_probes(int param_dim, const Vec& current_global, int count,
                                   Rng& rng);

}  // namespace cefl
