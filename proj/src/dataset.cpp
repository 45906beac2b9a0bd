#include "cefl/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace cefl {

double DpuDataset::sample_variance() const {
  int D = size();
  if (D < 2) return 0.0;
  Vec mean = Vec::Zero(point_dim());
  for (int i = 0; i < D; ++i) mean += point_vector(i);
  mean /= D;
  double acc = 0.0;
  for (int i = 0; i < D; ++i) acc += (point_vector(i) - mean).squaredNorm();
  return acc / (D - 1);
}

void DpuDataset::append(const DpuDataset& other) {
  if (other.size() == 0) return;
  if (size() == 0) {
    *this = other;
    return;
  }
  if (other.feature_dim() != feature_dim() || other.num_classes != num_classes)
    throw DomainError("dataset append: shape mismatch");
  Mat f(size() + other.size(), feature_dim());
  f << features, other.features;
  Eigen::VectorXi l(size() + other.size());
  l << labels, other.labels;
  features = std::move(f);
  labels = std::move(l);
}

DpuDataset DpuDataset::subset(const std::vector<int>& idx) const {
  DpuDataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<int>(idx.size()), feature_dim());
  out.labels.resize(static_cast<int>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.features.row(static_cast<int>(k)) = features.row(idx[k]);
    out.labels(static_cast<int>(k)) = labels(idx[k]);
  }
  return out;
}

void DpuDataset::evict_to(int cap) {
  int D = size();
  if (D <= cap) return;
  features = features.bottomRows(cap).eval();
  labels = labels.tail(cap).eval();
}

Mat make_class_means(const SyntheticTaskConfig& cfg, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat means(cfg.num_classes, cfg.feature_dim);
  for (int k = 0; k < cfg.num_classes; ++k)
    for (int j = 0; j < cfg.feature_dim; ++j)
      means(k, j) = cfg.class_separation * normal(rng) / std::sqrt(double(cfg.feature_dim));
  return means;
}

DpuDataset sample_mixture(const SyntheticTaskConfig& cfg, const Mat& class_means,
                          const std::vector<int>& class_subset, int count, Rng& rng) {
  if (class_subset.empty()) throw DomainError("sample_mixture: empty class subset");
  DpuDataset ds;
  ds.num_classes = cfg.num_classes;
  ds.features.resize(count, cfg.feature_dim);
  ds.labels.resize(count);
  std::normal_distribution<double> normal(0.0, cfg.noise_std);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(class_subset.size()) - 1);
  for (int i = 0; i < count; ++i) {
    int cls = class_subset[pick(rng)];
    ds.labels(i) = cls;
    for (int j = 0; j < cfg.feature_dim; ++j)
      ds.features(i, j) = class_means(cls, j) + normal(rng);
  }
  return ds;
}

std::vector<int> pick_class_subset(const SyntheticTaskConfig& cfg, Rng& rng) {
  std::vector<int> all(cfg.num_classes);
  for (int k = 0; k < cfg.num_classes; ++k) all[k] = k;
  for (int k = cfg.num_classes - 1; k > 0; --k) {
    std::uniform_int_distribution<int> d(0, k);
    std::swap(all[k], all[d(rng)]);
  }
  all.resize(std::min(cfg.classes_per_ue, cfg.num_classes));
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ConfigError("IDX file truncated");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

DpuDataset load_idx(const std::string& images_path, const std::string& labels_path,
                    int limit) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw ConfigError("cannot open IDX images: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw ConfigError("cannot open IDX labels: " + labels_path);

  if (read_be32(img) != 2051) throw ConfigError("bad IDX image magic");
  std::uint32_t n = read_be32(img);
  std::uint32_t rows = read_be32(img);
  std::uint32_t cols = read_be32(img);
  if (read_be32(lab) != 2049) throw ConfigError("bad IDX label magic");
  std::uint32_t nl = read_be32(lab);
  if (n != nl) throw ConfigError("IDX image/label count mismatch");
  if (limit > 0 && static_cast<std::uint32_t>(limit) < n) n = limit;

  DpuDataset ds;
  ds.num_classes = 10;
  ds.features.resize(n, rows * cols);
  ds.labels.resize(n);
  std::vector<unsigned char> buf(rows * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!img) throw ConfigError("IDX image data truncated");
    for (std::uint32_t j = 0; j < rows * cols; ++j)
      ds.features(i, j) = buf[j] / 255.0;
    char l;
    lab.read(&l, 1);
    if (!lab) throw ConfigError("IDX label data truncated");
    ds.labels(i) = static_cast<unsigned char>(l);
  }
  return ds;
}

void save_dataset(const DpuDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write dataset cache: " + path);
  std::int32_t header[3] = {ds.size(), ds.feature_dim(), ds.num_classes};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (int i = 0; i < ds.size(); ++i)
    for (int j = 0; j < ds.feature_dim(); ++j) {
      double v = ds.features(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  for (int i = 0; i < ds.size(); ++i) {
    std::int32_t l = ds.labels(i);
    out.write(reinterpret_cast<const char*>(&l), sizeof(l));
  }
}

DpuDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset cache: " + path);
  std::int32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw ConfigError("dataset cache truncated");
  DpuDataset ds;
  ds.num_classes = header[2];
  ds.features.resize(header[0], header[1]);
  ds.labels.resize(header[0]);
  for (int i = 0; i < header[0]; ++i)
    for (int j = 0; j < header[1]; ++j) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      ds.features(i, j) = v;
    }
  for (int i = 0; i < header[0]; ++i) {
    std::int32_t l;
    in.read(reinterpret_cast<char*>(&l), sizeof(l));
    ds.labels(i) = l;
  }
  if (!in) throw ConfigError("dataset cache truncated");
  return ds;
}

}  // namespace cefl
