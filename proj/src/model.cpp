#include "cefl/model.hpp"

#include <cmath>

namespace cefl {

double Model::mean_loss(const Vec& x, const DpuDataset& ds) const {
  if (ds.size() == 0) throw DomainError("loss of an empty dataset is undefined");
  double acc = 0.0;
  for (int i = 0; i < ds.size(); ++i)
    acc += point_loss(x, ds.features.row(i).transpose(), ds.labels(i));
  return acc / ds.size();
}

double Model::mean_loss(const Vec& x, const DpuDataset& ds,
                        const std::vector<int>& idx) const {
  if (idx.empty()) throw DomainError("loss of an empty subset is undefined");
  double acc = 0.0;
  for (int i : idx) acc += point_loss(x, ds.features.row(i).transpose(), ds.labels(i));
  return acc / static_cast<double>(idx.size());
}

Vec Model::mean_grad(const Vec& x, const DpuDataset& ds) const {
  if (ds.size() == 0) throw DomainError("gradient of an empty dataset is undefined");
  Vec g = Vec::Zero(x.size()), tmp(x.size());
  for (int i = 0; i < ds.size(); ++i) {
    point_grad(x, ds.features.row(i).transpose(), ds.labels(i), tmp);
    g += tmp;
  }
  return g / ds.size();
}

Vec Model::mean_grad(const Vec& x, const DpuDataset& ds, const std::vector<int>& idx) const {
  if (idx.empty()) throw DomainError("gradient of an empty subset is undefined");
  Vec g = Vec::Zero(x.size()), tmp(x.size());
  for (int i : idx) {
    point_grad(x, ds.features.row(i).transpose(), ds.labels(i), tmp);
    g += tmp;
  }
  return g / static_cast<double>(idx.size());
}

double Model::accuracy(const Vec& x, const DpuDataset& ds) const {
  if (ds.size() == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < ds.size(); ++i)
    hits += predict(x, ds.features.row(i).transpose()) == ds.labels(i);
  return double(hits) / ds.size();
}

namespace {

// logits -> stable softmax probabilities, returns logsumexp.
double softmax_inplace(Vec& logits) {
  double mx = logits.maxCoeff();
  logits.array() -= mx;
  logits = logits.array().exp();
  double z = logits.sum();
  logits /= z;
  return std::log(z) + mx;
}

}  // namespace

double LogisticModel::point_loss(const Vec& x, const Eigen::Ref<const Vec>& phi,
                                 int label) const {
  int F = static_cast<int>(phi.size());
  int K = static_cast<int>(x.size()) / (F + 1);
  Eigen::Map<const Mat> W(x.data(), K, F + 1);
  Vec logits = W.leftCols(F) * phi + W.col(F);
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits(label);
}

void LogisticModel::point_grad(const Vec& x, const Eigen::Ref<const Vec>& phi, int label,
                               Vec& grad_out) const {
  int F = static_cast<int>(phi.size());
  int K = static_cast<int>(x.size()) / (F + 1);
  Eigen::Map<const Mat> W(x.data(), K, F + 1);
  Vec p = W.leftCols(F) * phi + W.col(F);
  softmax_inplace(p);
  p(label) -= 1.0;
  grad_out.resize(x.size());
  Eigen::Map<Mat> G(grad_out.data(), K, F + 1);
  G.leftCols(F) = p * phi.transpose();
  G.col(F) = p;
}

int LogisticModel::predict(const Vec& x, const Eigen::Ref<const Vec>& phi) const {
  int F = static_cast<int>(phi.size());
  int K = static_cast<int>(x.size()) / (F + 1);
  Eigen::Map<const Mat> W(x.data(), K, F + 1);
  Vec logits = W.leftCols(F) * phi + W.col(F);
  Eigen::Index best;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

double MlpModel::point_loss(const Vec& x, const Eigen::Ref<const Vec>& phi,
                            int label) const {
  int F = static_cast<int>(phi.size());
  int H = hidden_;
  int K = (static_cast<int>(x.size()) - H * (F + 1)) / (H + 1);
  Eigen::Map<const Mat> W1(x.data(), H, F + 1);
  Eigen::Map<const Mat> W2(x.data() + H * (F + 1), K, H + 1);
  Vec h = (W1.leftCols(F) * phi + W1.col(F)).cwiseMax(0.0);
  Vec logits = W2.leftCols(H) * h + W2.col(H);
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits(label);
}

void MlpModel::point_grad(const Vec& x, const Eigen::Ref<const Vec>& phi, int label,
                          Vec& grad_out) const {
  int F = static_cast<int>(phi.size());
  int H = hidden_;
  int K = (static_cast<int>(x.size()) - H * (F + 1)) / (H + 1);
  Eigen::Map<const Mat> W1(x.data(), H, F + 1);
  Eigen::Map<const Mat> W2(x.data() + H * (F + 1), K, H + 1);
  Vec pre = W1.leftCols(F) * phi + W1.col(F);
  Vec h = pre.cwiseMax(0.0);
  Vec p = W2.leftCols(H) * h + W2.col(H);
  softmax_inplace(p);
  p(label) -= 1.0;

  grad_out.setZero(x.size());
  Eigen::Map<Mat> G1(grad_out.data(), H, F + 1);
  Eigen::Map<Mat> G2(grad_out.data() + H * (F + 1), K, H + 1);
  G2.leftCols(H) = p * h.transpose();
  G2.col(H) = p;
  Vec dh = W2.leftCols(H).transpose() * p;
  for (int j = 0; j < H; ++j)
    if (pre(j) <= 0.0) dh(j) = 0.0;
  G1.leftCols(F) = dh * phi.transpose();
  G1.col(F) = dh;
}

int MlpModel::predict(const Vec& x, const Eigen::Ref<const Vec>& phi) const {
  int F = static_cast<int>(phi.size());
  int H = hidden_;
  int K = (static_cast<int>(x.size()) - H * (F + 1)) / (H + 1);
  Eigen::Map<const Mat> W1(x.data(), H, F + 1);
  Eigen::Map<const Mat> W2(x.data() + H * (F + 1), K, H + 1);
  Vec h = (W1.leftCols(F) * phi + W1.col(F)).cwiseMax(0.0);
  Vec logits = W2.leftCols(H) * h + W2.col(H);
  Eigen::Index best;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

std::unique_ptr<Model> make_model(const std::string& name) {
  if (name == "logistic") return std::make_unique<LogisticModel>();
  if (name == "mlp") return std::make_unique<MlpModel>();
  throw ConfigError("unknown model: " + name);
}

}  // namespace cefl
