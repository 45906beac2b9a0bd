#pragma once

#include <vector>

#include "cefl/ml_engine.hpp"
#include "cefl/toml_lite.hpp"

namespace cefl {

struct BoundParams {
  double L = 1.0;
  Vec theta;     // per DPU
  double zeta1 = 1.0;
  double zeta2 = 0.0;
  Vec sigma_sq;  // per DPU, sampled dataset variance
  Vec delta;     // per DPU drift
  double theta_max = 0.0;
  double sigma_max_sq = 0.0;
  double m_min = 1e-3;
  double gamma_max = 20.0;
  double tau_tilde = 1.0;
  double f_star = 0.0;       // estimated optimal global loss
  double initial_loss = 0.0; // F^(0)(x^(0))
  double scale_factor = 1.5;

  void validate() const;
  TomlDoc to_toml() const;
  static BoundParams from_toml(const TomlDoc& doc);
};

// Monte-Carlo estimate of the local data variability constant: per random
// model vector, mean over distinct point pairs of the gradient/point distance
// ratio; maximum over draws, then scaled.
double estimate_theta(const Model& model, const DpuDataset& estimation_subset, int J,
                      Rng& rng, double scale_factor = 1.5);

// Per-DPU max gradient-difference ratio over J random model pairs, reduced by
// a global max, then scaled.
double estimate_smoothness(const Model& model, const std::vector<DpuDataset>& subsets,
                           int J, Rng& rng, double scale_factor = 1.5);

struct Dissimilarity {
  double zeta1 = 1.0;
  double zeta2 = 0.0;
};

// Least-squares fit of sum_i p_i ||grad_i||^2 against ||sum_i p_i grad_i||^2
// over J random model vectors, clamped to zeta1 >= 1, zeta2 >= 0, then scaled.
Dissimilarity estimate_dissimilarity(const Model& model,
                                     const std::vector<DpuDataset>& datasets, int J,
                                     Rng& rng, double scale_factor = 1.5);

// Draws `count` points uniformly without replacement for estimation subsets.
DpuDataset make_estimation_subset(const DpuDataset& ds, int count, Rng& rng);

// Re-runs the three estimators each round and keeps elementwise running
// maxima, as the dynamic estimation procedure prescribes.
class DynamicEstimator {
 public:
  DynamicEstimator(int estimation_points = 64, int J = 8, double scale_factor = 1.5)
      : estimation_points_(estimation_points), J_(J), scale_(scale_factor) {}

  BoundParams update(const Model& model, const std::vector<DpuDataset>& datasets,
                     Rng& rng);
  const BoundParams& current() const { return params_; }
  bool initialized() const { return initialized_; }

 private:
  int estimation_points_;
  int J_;
  double scale_;
  bool initialized_ = false;
  BoundParams params_;
};

// Proposition-style mini-batch variance bound; exactly zero at m = 1 or D = 1.
double sgd_variance_bound(double D, double m, double sigma_sq, double theta);

struct BoundTerms {
  double initial_gap = 0.0;   // (a)
  double drift = 0.0;         // (b)
  double sgd_noise = 0.0;     // (c)
  double heterogeneity = 0.0; // (d)
  double second_noise = 0.0;  // (e)
  double total() const {
    return initial_gap + drift + sgd_noise + heterogeneity + second_noise;
  }
};

// Per-round contribution of the convergence bound with tau replaced by the
// round duration. D_i, m_i, gamma_i are per-DPU (UEs then DCs); continuous
// gamma uses the geometric closed forms. Epsilon floors guard m and D.
BoundTerms convergence_bound_terms(double round_duration, const Vec& data_sizes,
                                   const Vec& m, const Vec& gamma,
                                   const BoundParams& params, const MlHyperParams& hp,
                                   int horizon = 1);

// Joint-horizon bound from the corollary (optional mode for small T).
double corollary_bound(const BoundParams& params, const MlHyperParams& hp, int num_dpus,
                       double gamma_bar, int T);

struct StepSizeCheck {
  bool ok = false;
  double value = 0.0;      // left-hand side
  double threshold = 0.0;  // 1 / (2*zeta1^2 + 1)
  double margin = 0.0;     // threshold - value
};

StepSizeCheck step_size_check(double eta, const Vec& gammas, double mu, double zeta1,
                              double L);

}  // namespace cefl
