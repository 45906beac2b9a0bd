#pragma once

#include <string>
#include <vector>

#include "cefl/common.hpp"
#include "cefl/topology.hpp"

namespace cefl {

// A labeled dataset held by one DPU. The point metric used by the variability
// and variance quantities concatenates the feature vector with a one-hot label
// block, so points from different classes are never at distance zero.
struct DpuDataset {
  Mat features;            // D x F
  Eigen::VectorXi labels;  // D
  int num_classes = 10;

  int size() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  int point_dim() const { return feature_dim() + num_classes; }

  Vec point_vector(int i) const {
    Vec v = Vec::Zero(point_dim());
    v.head(feature_dim()) = features.row(i).transpose();
    v(feature_dim() + labels(i)) = 1.0;
    return v;
  }

  // Sample variance with (D-1) normalization over the point vectors.
  double sample_variance() const;

  void append(const DpuDataset& other);
  DpuDataset subset(const std::vector<int>& idx) const;
  // Keeps the newest `cap` points (drop from the front).
  void evict_to(int cap);
};

struct SyntheticTaskConfig {
  int feature_dim = 16;
  int num_classes = 10;
  double class_separation = 3.0;
  double noise_std = 1.0;
  int classes_per_ue = 5;
};

// Class means for the Gaussian-mixture task, drawn once per experiment.
Mat make_class_means(const SyntheticTaskConfig& cfg, Rng& rng);

// Draws `count` points restricted to the given class subset (uniform over it).
DpuDataset sample_mixture(const SyntheticTaskConfig& cfg, const Mat& class_means,
                          const std::vector<int>& class_subset, int count, Rng& rng);

std::vector<int> pick_class_subset(const SyntheticTaskConfig& cfg, Rng& rng);

// IDX (MNIST-style) loaders; features scaled to [0,1]. `limit` of 0 loads all.
DpuDataset load_idx(const std::string& images_path, const std::string& labels_path,
                    int limit = 0);

// Binary cache round-trip for synthetic datasets.
void save_dataset(const DpuDataset& ds, const std::string& path);
DpuDataset load_dataset(const std::string& path);

}  // namespace cefl
