#include "cefl/bound_estimator.hpp"

#include <algorithm>
#include <cmath>

namespace cefl {

void BoundParams::validate() const {
  if (!(L > 0.0)) throw ConfigError("bound params: L must be positive");
  if (zeta1 < 1.0 || zeta2 < 0.0) throw ConfigError("bound params: zeta out of range");
  for (int i = 0; i < theta.size(); ++i)
    if (theta(i) < 0.0) throw ConfigError("bound params: theta must be nonnegative");
}

TomlDoc BoundParams::to_toml() const {
  TomlDoc doc;
  doc.set_number("bound.L", L);
  doc.set_number("bound.zeta1", zeta1);
  doc.set_number("bound.zeta2", zeta2);
  doc.set_array("bound.theta", std::vector<double>(theta.data(), theta.data() + theta.size()));
  doc.set_array("bound.sigma_sq",
                std::vector<double>(sigma_sq.data(), sigma_sq.data() + sigma_sq.size()));
  doc.set_array("bound.delta", std::vector<double>(delta.data(), delta.data() + delta.size()));
  doc.set_number("bound.theta_max", theta_max);
  doc.set_number("bound.sigma_max_sq", sigma_max_sq);
  doc.set_number("bound.m_min", m_min);
  doc.set_number("bound.gamma_max", gamma_max);
  doc.set_number("bound.tau_tilde", tau_tilde);
  doc.set_number("bound.f_star", f_star);
  doc.set_number("bound.initial_loss", initial_loss);
  doc.set_number("bound.scale_factor", scale_factor);
  return doc;
}

BoundParams BoundParams::from_toml(const TomlDoc& doc) {
  BoundParams p;
  p.L = doc.number_or("bound.L", 1.0);
  p.zeta1 = doc.number_or("bound.zeta1", 1.0);
  p.zeta2 = doc.number_or("bound.zeta2", 0.0);
  auto to_vec = [](const std::vector<double>& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
    return out;
  };
  p.theta = to_vec(doc.array_or("bound.theta", {}));
  p.sigma_sq = to_vec(doc.array_or("bound.sigma_sq", {}));
  p.delta = to_vec(doc.array_or("bound.delta", {}));
  p.theta_max = doc.number_or("bound.theta_max", 0.0);
  p.sigma_max_sq = doc.number_or("bound.sigma_max_sq", 0.0);
  p.m_min = doc.number_or("bound.m_min", 1e-3);
  p.gamma_max = doc.number_or("bound.gamma_max", 20.0);
  p.tau_tilde = doc.number_or("bound.tau_tilde", 1.0);
  p.f_star = doc.number_or("bound.f_star", 0.0);
  p.initial_loss = doc.number_or("bound.initial_loss", 0.0);
  p.scale_factor = doc.number_or("bound.scale_factor", 1.5);
  return p;
}

namespace {

Vec random_model_vector(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x(i) = normal(rng);
  return x;
}

}  // namespace

double estimate_theta(const Model& model, const DpuDataset& ds, int J, Rng& rng,
                      double scale_factor) {
  if (ds.size() < 2) throw EstimationError("theta estimation needs at least 2 points");
  if (J < 1) throw EstimationError("theta estimation needs J >= 1");
  int dim = model.param_dim(ds.feature_dim(), ds.num_classes);
  double best = 0.0;
  Vec ga(dim), gb(dim);
  for (int j = 0; j < J; ++j) {
    Vec x = random_model_vector(dim, rng);
    double acc = 0.0;
    long long pairs = 0;
    for (int a = 0; a < ds.size(); ++a) {
      model.point_grad(x, ds.features.row(a).transpose(), ds.labels(a), ga);
      Vec pa = ds.point_vector(a);
      for (int b = a + 1; b < ds.size(); ++b) {
        double dist = (pa - ds.point_vector(b)).norm();
        if (dist == 0.0) continue;  // duplicate points carry no information
        model.point_grad(x, ds.features.row(b).transpose(), ds.labels(b), gb);
        acc += (ga - gb).norm() / dist;
        ++pairs;
      }
    }
    if (pairs == 0) throw EstimationError("theta estimation: all points identical");
    best = std::max(best, acc / static_cast<double>(pairs));
  }
  return scale_factor * best;
}

double estimate_smoothness(const Model& model, const std::vector<DpuDataset>& subsets,
                           int J, Rng& rng, double scale_factor) {
  if (J < 1) throw EstimationError("smoothness estimation needs J >= 1");
  double global_max = 0.0;
  for (const auto& ds : subsets) {
    if (ds.size() == 0) continue;
    int dim = model.param_dim(ds.feature_dim(), ds.num_classes);
    double local = 0.0;
    for (int j = 0; j < J; ++j) {
      Vec x1 = random_model_vector(dim, rng);
      Vec x2 = random_model_vector(dim, rng);
      double dist = (x1 - x2).norm();
      while (dist == 0.0) {
        x2 = random_model_vector(dim, rng);
        dist = (x1 - x2).norm();
      }
      double ratio = (model.mean_grad(x1, ds) - model.mean_grad(x2, ds)).norm() / dist;
      local = std::max(local, ratio);
    }
    global_max = std::max(global_max, local);
  }
  return scale_factor * global_max;
}

Dissimilarity estimate_dissimilarity(const Model& model,
                                     const std::vector<DpuDataset>& datasets, int J,
                                     Rng& rng, double scale_factor) {
  if (J < 2) throw EstimationError("dissimilarity estimation needs J >= 2");
  double total = 0.0;
  int dim = 0;
  for (const auto& ds : datasets) {
    total += ds.size();
    if (ds.size() > 0) dim = model.param_dim(ds.feature_dim(), ds.num_classes);
  }
  if (total == 0.0 || dim == 0) throw EstimationError("dissimilarity: no data");

  std::vector<double> ys, us;
  for (int j = 0; j < J; ++j) {
    Vec x = random_model_vector(dim, rng);
    double y = 0.0;
    Vec mean_grad = Vec::Zero(dim);
    for (const auto& ds : datasets) {
      if (ds.size() == 0) continue;
      double p = ds.size() / total;
      Vec g = model.mean_grad(x, ds);
      y += p * g.squaredNorm();
      mean_grad += p * g;
    }
    ys.push_back(y);
    us.push_back(mean_grad.squaredNorm());
  }

  double u_mean = 0.0, y_mean = 0.0;
  for (int j = 0; j < J; ++j) {
    u_mean += us[j];
    y_mean += ys[j];
  }
  u_mean /= J;
  y_mean /= J;
  double suu = 0.0, suy = 0.0;
  for (int j = 0; j < J; ++j) {
    suu += (us[j] - u_mean) * (us[j] - u_mean);
    suy += (us[j] - u_mean) * (ys[j] - y_mean);
  }

  Dissimilarity out;
  if (suu <= 1e-12 * std::max(1.0, u_mean * u_mean)) {
    // Degenerate design: all u_j equal. Fall back to the tightest slope; with
    // vanishing u the intercept has to absorb the dissimilarity instead.
    double slope = 0.0;
    for (int j = 0; j < J; ++j)
      if (us[j] > 1e-12) slope = std::max(slope, ys[j] / us[j]);
    out.zeta1 = std::max(slope, 1.0);
    out.zeta2 = 0.0;
    for (int j = 0; j < J; ++j)
      out.zeta2 = std::max(out.zeta2, ys[j] - out.zeta1 * us[j]);
  } else {
    double z1 = suy / suu;
    double z2 = y_mean - z1 * u_mean;
    out.zeta1 = std::max(z1, 1.0);
    out.zeta2 = std::max(z2, 0.0);
  }
  out.zeta1 *= scale_factor;
  out.zeta2 *= scale_factor;
  out.zeta1 = std::max(out.zeta1, 1.0);
  return out;
}

DpuDataset make_estimation_subset(const DpuDataset& ds, int count, Rng& rng) {
  if (ds.size() <= count) return ds;
  std::vector<int> idx(ds.size());
  for (int i = 0; i < ds.size(); ++i) idx[i] = i;
  std::vector<int> pick;
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<int> d(k, ds.size() - 1);
    std::swap(idx[k], idx[d(rng)]);
    pick.push_back(idx[k]);
  }
  std::sort(pick.begin(), pick.end());
  return ds.subset(pick);
}

BoundParams DynamicEstimator::update(const Model& model,
                                     const std::vector<DpuDataset>& datasets, Rng& rng) {
  int d = static_cast<int>(datasets.size());
  std::vector<DpuDataset> subsets;
  subsets.reserve(d);
  for (const auto& ds : datasets)
    subsets.push_back(ds.size() > 0 ? make_estimation_subset(ds, estimation_points_, rng)
                                    : ds);

  BoundParams fresh;
  fresh.scale_factor = scale_;
  fresh.theta = Vec::Zero(d);
  fresh.sigma_sq = Vec::Zero(d);
  fresh.delta = Vec::Zero(d);
  for (int i = 0; i < d; ++i) {
    if (subsets[i].size() >= 2)
      fresh.theta(i) = estimate_theta(model, subsets[i], J_, rng, scale_);
    fresh.sigma_sq(i) = datasets[i].sample_variance();
  }
  fresh.L = std::max(estimate_smoothness(model, subsets, J_, rng, scale_), 1e-9);
  auto dis = estimate_dissimilarity(model, datasets, std::max(J_, 2), rng, scale_);
  fresh.zeta1 = dis.zeta1;
  fresh.zeta2 = dis.zeta2;
  fresh.theta_max = fresh.theta.size() ? fresh.theta.maxCoeff() : 0.0;
  fresh.sigma_max_sq = fresh.sigma_sq.size() ? fresh.sigma_sq.maxCoeff() : 0.0;

  if (!initialized_) {
    params_ = fresh;
    initialized_ = true;
  } else {
    params_.L = std::max(params_.L, fresh.L);
    params_.zeta1 = std::max(params_.zeta1, fresh.zeta1);
    params_.zeta2 = std::max(params_.zeta2, fresh.zeta2);
    params_.theta = params_.theta.cwiseMax(fresh.theta);
    params_.sigma_sq = fresh.sigma_sq;  // variance tracks the live data
    params_.theta_max = std::max(params_.theta_max, fresh.theta_max);
    params_.sigma_max_sq = std::max(params_.sigma_max_sq, fresh.sigma_max_sq);
  }
  return params_;
}

double sgd_variance_bound(double D, double m, double sigma_sq, double theta) {
  if (m >= 1.0 || D <= 1.0) return 0.0;
  return 2.0 * (1.0 - m) * (D - 1.0) * sigma_sq * theta * theta / (m * D * D);
}

BoundTerms convergence_bound_terms(double round_duration, const Vec& data_sizes,
                                   const Vec& m, const Vec& gamma,
                                   const BoundParams& params, const MlHyperParams& hp,
                                   int horizon) {
  const int d = static_cast<int>(data_sizes.size());
  const double T = std::max(horizon, 1);
  const double ve = hp.vartheta * hp.eta;
  BoundTerms out;
  out.initial_gap = 4.0 * std::max(params.initial_loss - params.f_star, 0.0) / (ve * T);

  double total = std::max(data_sizes.sum(), 1.0);
  double delta_sum = params.delta.size() == d ? params.delta.sum() : 0.0;
  out.drift = 4.0 / (ve * T) * round_duration * delta_sum;

  double het_max = 0.0;
  for (int i = 0; i < d; ++i) {
    double Di = std::max(data_sizes(i), 1.0);
    double mi = std::max(m(i), params.m_min);
    double gi = std::max(gamma(i), 1e-3);
    double n1 = a_norm1(gi, hp.eta, hp.mu);
    double n2 = a_norm2_sq(gi, hp.eta, hp.mu);
    double pi = Di / total;
    double th = params.theta.size() == d ? params.theta(i) : 0.0;
    double sg = params.sigma_sq.size() == d ? params.sigma_sq(i) : 0.0;
    double noise = (1.0 - mi) * (Di - 1.0) * th * th * sg / (mi * Di * Di);
    out.sgd_noise += 16.0 * hp.eta * params.L * hp.vartheta / T * pi * pi * noise * n2 / (n1 * n1);
    out.second_noise += 12.0 * hp.eta * hp.eta * params.L * params.L / T * noise * pi * gi *
                        std::max(n2 - 1.0, 0.0) / n1;
    het_max = std::max(het_max, gi * gi * std::max(n1 - 1.0, 0.0) / n1);
  }
  out.heterogeneity = 12.0 * hp.eta * hp.eta * params.L * params.L * params.zeta2 * het_max;
  return out;
}

double corollary_bound(const BoundParams& params, const MlHyperParams& hp, int num_dpus,
                       double gamma_bar, int T) {
  double d = num_dpus;
  double gap = std::max(params.initial_loss - params.f_star, 0.0);
  double sdt = std::sqrt(d * T);
  double sgb = std::sqrt(gamma_bar);
  double b1 = 4.0 * sgb / (hp.vartheta * sdt) * gap;
  double b2 = 4.0 * params.tau_tilde * sgb / (hp.vartheta * sdt);
  double b3 = 16.0 * params.L * hp.vartheta * params.theta_max * params.sigma_max_sq /
              params.m_min * std::sqrt(d / (gamma_bar * T));
  double b4 = 12.0 * params.L * params.L * d * params.theta_max * params.sigma_max_sq *
              params.gamma_max / (gamma_bar * params.m_min * T);
  double b5 = 12.0 * params.L * params.L * params.zeta2 * d * params.gamma_max *
              params.gamma_max / (gamma_bar * T);
  return b1 + b2 + b3 + b4 + b5;
}

StepSizeCheck step_size_check(double eta, const Vec& gammas, double mu, double zeta1,
                              double L) {
  StepSizeCheck out;
  double worst = 0.0;
  for (int i = 0; i < gammas.size(); ++i) {
    double g = gammas(i);
    if (g <= 0.0) continue;
    double n1 = a_norm1(g, eta, mu);
    worst = std::max(worst, g * g * std::max(n1 - 1.0, 0.0) / n1);
  }
  out.value = 4.0 * eta * eta * L * L * worst;
  out.threshold = 1.0 / (2.0 * zeta1 * zeta1 + 1.0);
  out.margin = out.threshold - out.value;
  out.ok = out.value <= out.threshold;
  return out;
}

}  // namespace cefl
