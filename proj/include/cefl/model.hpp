#pragma once

#include <memory>
#include <vector>

#include "cefl/dataset.hpp"

namespace cefl {

// Task loss interface. Parameters are a flat vector; gradients are w.r.t. the
// parameters for a single data point or a mean over an index subset.
class Model {
 public:
  virtual ~Model() = default;
  virtual int param_dim(int feature_dim, int num_classes) const = 0;
  virtual double point_loss(const Vec& x, const Eigen::Ref<const Vec>& phi, int label) const = 0;
  virtual void point_grad(const Vec& x, const Eigen::Ref<const Vec>& phi, int label,
                          Vec& grad_out) const = 0;
  virtual int predict(const Vec& x, const Eigen::Ref<const Vec>& phi) const = 0;

  double mean_loss(const Vec& x, const DpuDataset& ds) const;
  double mean_loss(const Vec& x, const DpuDataset& ds, const std::vector<int>& idx) const;
  Vec mean_grad(const Vec& x, const DpuDataset& ds) const;
  Vec mean_grad(const Vec& x, const DpuDataset& ds, const std::vector<int>& idx) const;
  double accuracy(const Vec& x, const DpuDataset& ds) const;
};

// Multinomial logistic regression with bias, the default task loss (convex,
// with a computable smoothness constant).
class LogisticModel : public Model {
 public:
  int param_dim(int feature_dim, int num_classes) const override {
    return num_classes * (feature_dim + 1);
  }
  double point_loss(const Vec& x, const Eigen::Ref<const Vec>& phi, int label) const override;
  void point_grad(const Vec& x, const Eigen::Ref<const Vec>& phi, int label,
                  Vec& grad_out) const override;
  int predict(const Vec& x, const Eigen::Ref<const Vec>& phi) const override;
};

// Two-layer ReLU MLP with softmax cross-entropy, for non-convex runs.
class MlpModel : public Model {
 public:
  explicit MlpModel(int hidden = 32) : hidden_(hidden) {}
  int param_dim(int feature_dim, int num_classes) const override {
    return hidden_ * (feature_dim + 1) + num_classes * (hidden_ + 1);
  }
  double point_loss(const Vec& x, const Eigen::Ref<const Vec>& phi, int label) const override;
  void point_grad(const Vec& x, const Eigen::Ref<const Vec>& phi, int label,
                  Vec& grad_out) const override;
  int predict(const Vec& x, const Eigen::Ref<const Vec>& phi) const override;
  int hidden() const { return hidden_; }

 private:
  int hidden_;
};

std::unique_ptr<Model> make_model(const std::string& name);

}  // namespace cefl
