#include <doctest.h>

#include <set>

#include "cefl/ml_engine.hpp"
#include "test_util.hpp"

using namespace cefl;

namespace {

DpuDataset two_class_pair() {
  DpuDataset ds;
  ds.num_classes = 2;
  ds.features = Mat(2, 1);
  ds.features << 1.0, -1.0;
  ds.labels = Eigen::VectorXi(2);
  ds.labels << 1, 0;
  return ds;
}

DpuDataset random_mixture(int count, Rng& rng, int classes = 3, int dim = 4) {
  SyntheticTaskConfig task;
  task.feature_dim = dim;
  task.num_classes = classes;
  Mat means = make_class_means(task, rng);
  std::vector<int> all(classes);
  for (int k = 0; k < classes; ++k) all[k] = k;
  return sample_mixture(task, means, all, count, rng);
}

}  // namespace

TEST_CASE("local and global loss") {
  LogisticModel model;
  SUBCASE("separating weights drive the pair loss under log 2") {
    auto ds = two_class_pair();
    Vec x = Vec::Zero(model.param_dim(1, 2));
    // class-1 logit grows with the feature, class-0 shrinks.
    x(0) = -3.0;
    x(1) = 3.0;
    CHECK(local_loss(model, x, ds) < std::log(2.0));
    Vec sure = 100.0 * x;
    CHECK(local_loss(model, sure, ds) < 1e-6);
  }
  SUBCASE("mean over points") {
    Rng rng(2);
    auto ds = random_mixture(7, rng);
    Vec x = Vec::Ones(model.param_dim(4, 3));
    double acc = 0.0;
    for (int i = 0; i < ds.size(); ++i)
      acc += model.point_loss(x, ds.features.row(i).transpose(), ds.labels(i));
    CHECK(local_loss(model, x, ds) == doctest::Approx(acc / ds.size()));
  }
  SUBCASE("empty dataset is an error") {
    DpuDataset empty;
    empty.features = Mat(0, 4);
    empty.labels = Eigen::VectorXi(0);
    Vec x = Vec::Zero(model.param_dim(4, 10));
    CHECK_THROWS_AS(local_loss(model, x, empty), DomainError);
  }

  SUBCASE("global loss equals the single local loss for one DPU") {
    Rng rng(3);
    auto ds = random_mixture(11, rng);
    Vec x = Vec::Ones(model.param_dim(4, 3)) * 0.1;
    CHECK(global_loss(model, x, {ds}) == doctest::Approx(local_loss(model, x, ds)));
  }
  SUBCASE("routing invariance: splitting a dataset changes nothing") {
    Rng rng(4);
    auto ds = random_mixture(20, rng);
    Vec x = Vec::Ones(model.param_dim(4, 3)) * 0.2;
    std::vector<int> left, right;
    for (int i = 0; i < ds.size(); ++i) (i % 3 == 0 ? left : right).push_back(i);
    double whole = global_loss(model, x, {ds});
    double split = global_loss(model, x, {ds.subset(left), ds.subset(right)});
    CHECK(std::abs(whole - split) < 1e-12);
  }
  SUBCASE("weighted mean semantics") {
    Rng rng(5);
    auto a = random_mixture(5, rng);
    auto b = random_mixture(15, rng);
    Vec x = Vec::Ones(model.param_dim(4, 3)) * 0.3;
    double expect =
        (5.0 * local_loss(model, x, a) + 15.0 * local_loss(model, x, b)) / 20.0;
    CHECK(global_loss(model, x, {a, b}) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("mini-batch sampling") {
  Rng rng(7);
  auto ds = random_mixture(10, rng);
  SUBCASE("full batch") {
    auto idx = sample_minibatch(ds, 1.0, rng);
    CHECK(idx.size() == 10);
  }
  SUBCASE("half batch is exactly five distinct points") {
    auto idx = sample_minibatch(ds, 0.5, rng);
    CHECK(idx.size() == 5);
    CHECK(std::set<int>(idx.begin(), idx.end()).size() == 5);
  }
  SUBCASE("inclusion frequency matches the without-replacement law") {
    const int draws = 10000;
    const double m = 0.5;
    Eigen::VectorXi hits = Eigen::VectorXi::Zero(10);
    for (int it = 0; it < draws; ++it) {
      for (int i : sample_minibatch(ds, m, rng)) ++hits(i);
    }
    double sigma = std::sqrt(m * (1.0 - m) / draws);
    for (int i = 0; i < 10; ++i)
      CHECK(std::abs(hits(i) / double(draws) - m) <= 3.5 * sigma);
  }
  SUBCASE("out-of-range ratio") {
    CHECK_THROWS_AS(sample_minibatch(ds, 0.0, rng), DomainError);
    CHECK_THROWS_AS(sample_minibatch(ds, 1.5, rng), DomainError);
  }
}

TEST_CASE("local training recursion") {
  LogisticModel model;
  Rng rng(11);
  auto ds = random_mixture(30, rng);
  Vec x0 = Vec::Zero(model.param_dim(4, 3));

  SUBCASE("zero iterations return the global model") {
    LocalRunConfig cfg{0, 0.5, 1};
    auto res = local_train(model, x0, ds, cfg, MlHyperParams{});
    CHECK(res.x_final.isApprox(x0));
  }
  SUBCASE("plain SGD step when mu is zero") {
    MlHyperParams hp;
    hp.eta = 0.05;
    hp.mu = 0.0;
    LocalRunConfig cfg{1, 1.0, 2};  // full batch makes the step deterministic
    auto res = local_train(model, x0, ds, cfg, hp);
    Vec expect = x0 - hp.eta * model.mean_grad(x0, ds);
    CHECK((res.x_final - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("accumulated-gradient identity at the final step") {
    MlHyperParams hp;
    hp.eta = 0.001;
    hp.mu = 0.01;
    LocalRunConfig cfg{3, 0.4, 3};
    auto res = local_train(model, x0, ds, cfg, hp, true);
    Vec a = accumulation_weights(cfg.gamma, hp.eta, hp.mu);
    Vec rhs = Vec::Zero(x0.size());
    for (int l = 0; l < cfg.gamma; ++l) rhs += a(l) * res.stochastic_grads[l];
    Vec lhs = (x0 - res.x_final) / hp.eta;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("identical seeds give bit-identical trajectories") {
    LocalRunConfig cfg{5, 0.3, 42};
    auto r1 = local_train(model, x0, ds, cfg, MlHyperParams{}, true);
    auto r2 = local_train(model, x0, ds, cfg, MlHyperParams{}, true);
    for (std::size_t k = 0; k < r1.trajectory.size(); ++k)
      CHECK((r1.trajectory[k] - r2.trajectory[k]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("normalized accumulated gradient") {
  LogisticModel model;
  Rng rng(13);
  auto ds = random_mixture(25, rng);
  Vec x0 = Vec::Zero(model.param_dim(4, 3));

  SUBCASE("mu = 0 gives the plain average of step gradients") {
    MlHyperParams hp;
    hp.eta = 0.01;
    hp.mu = 0.0;
    LocalRunConfig cfg{4, 0.5, 5};
    auto res = local_train(model, x0, ds, cfg, hp, true);
    Vec d = normalized_accum_gradient(x0, res.x_final, cfg.gamma, hp);
    Vec mean = Vec::Zero(x0.size());
    for (const auto& g : res.stochastic_grads) mean += g;
    mean /= cfg.gamma;
    CHECK((d - mean).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("single iteration returns the lone gradient") {
    MlHyperParams hp;
    hp.eta = 0.01;
    hp.mu = 0.02;
    LocalRunConfig cfg{1, 0.6, 6};
    auto res = local_train(model, x0, ds, cfg, hp, true);
    Vec d = normalized_accum_gradient(x0, res.x_final, 1, hp);
    CHECK((d - res.stochastic_grads[0]).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("eta*mu = 1/2 weighting against a direct accumulation") {
    MlHyperParams hp;
    hp.eta = 0.5;
    hp.mu = 1.0;  // q = 1/2, gamma = 2 -> a = (1/2, 1), ||a||_1 = 3/2
    CHECK(a_norm1(2, hp.eta, hp.mu) == doctest::Approx(1.5));
    LocalRunConfig cfg{2, 1.0, 7};
    auto res = local_train(model, x0, ds, cfg, hp, true);
    Vec d = normalized_accum_gradient(x0, res.x_final, 2, hp);
    Vec direct = (0.5 * res.stochastic_grads[0] + res.stochastic_grads[1]) / 1.5;
    CHECK((d - direct).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("gamma = 0 yields the zero vector") {
    Vec d = normalized_accum_gradient(x0, x0, 0, MlHyperParams{});
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("global aggregation") {
  MlHyperParams hp;
  hp.eta = 0.001;
  hp.vartheta = 0.01;
  Vec x = Vec::Ones(6);
  SUBCASE("single DPU") {
    Vec g = Vec::Constant(6, 2.0);
    Vec next = global_aggregate(x, {10.0}, {g}, hp);
    CHECK((next - (x - hp.vartheta * hp.eta * g)).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("zero gradients change nothing") {
    Vec next = global_aggregate(x, {3.0, 5.0}, {Vec::Zero(6), Vec::Zero(6)}, hp);
    CHECK(next.isApprox(x));
  }
  SUBCASE("weighted mean of directions") {
    Vec u = Vec::Unit(6, 2);
    Vec next = global_aggregate(x, {1.0, 3.0}, {4.0 * u, Vec::Zero(6)}, hp);
    CHECK((next - (x - hp.vartheta * hp.eta * u)).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("BS-level partial summation is invariant") {
    Rng rng(15);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> grads;
    std::vector<double> sizes;
    Vec flat = Vec::Zero(6);
    double total = 0.0;
    for (int i = 0; i < 6; ++i) {
      Vec g(6);
      for (int k = 0; k < 6; ++k) g(k) = normal(rng);
      double sz = 1.0 + i;
      grads.push_back(g);
      sizes.push_back(sz);
      flat += sz * g;
      total += sz;
    }
    Vec grouped = Vec::Zero(6);
    grouped += sizes[0] * grads[0] + sizes[1] * grads[1];
    grouped += sizes[2] * grads[2] + sizes[3] * grads[3] + sizes[4] * grads[4];
    grouped += sizes[5] * grads[5];
    CHECK((flat - grouped).cwiseAbs().maxCoeff() < 1e-12);
    Vec direct = global_aggregate(x, sizes, grads, hp);
    Vec via_groups = x - hp.vartheta * hp.eta * grouped / total;
    CHECK((direct - via_groups).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("drift measurement") {
  LogisticModel model;
  Rng rng(17);
  auto base_a = random_mixture(40, rng);
  auto base_b = random_mixture(40, rng);
  Rng prng(18);
  auto probes = make_drift_probes(model.param_dim(4, 3), Vec::Zero(model.param_dim(4, 3)),
                                  8, prng);

  SUBCASE("identical datasets have zero drift") {
    Vec d = measure_drift(model, {base_a, base_b}, {base_a, base_b}, probes, 2.0);
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("doubling one dataset shifts the fractional loss by a known amount") {
    auto doubled = base_a;
    doubled.append(base_a);
    std::vector<DpuDataset> prev = {base_a, base_b};
    std::vector<DpuDataset> next = {doubled, base_b};
    double tau = 2.0;
    Vec d = measure_drift(model, prev, next, probes, tau, 1.0);
    // fraction moves from 40/80 to 80/120 with the per-point loss unchanged
    double expect = 0.0;
    for (const auto& x : probes) {
      double la = model.mean_loss(x, base_a);
      expect = std::max(expect, (80.0 / 120.0 * la - 40.0 / 80.0 * la) / tau);
    }
    CHECK(d(0) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("doubling tau halves the estimate") {
    auto grown = base_a;
    grown.append(base_b);
    std::vector<DpuDataset> prev = {base_a, base_b};
    std::vector<DpuDataset> next = {grown, base_b};
    Vec d1 = measure_drift(model, prev, next, probes, 1.0);
    Vec d2 = measure_drift(model, prev, next, probes, 2.0);
    CHECK((d1 - 2.0 * d2).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("tau must be positive") {
    CHECK_THROWS_AS(measure_drift(model, {base_a}, {base_a}, probes, 0.0), DomainError);
  }
}

TEST_CASE("routing invariance of the aggregate direction at full batch") {
  LogisticModel model;
  Rng rng(19);
  auto ds = random_mixture(24, rng);
  MlHyperParams hp;
  hp.eta = 0.01;
  hp.mu = 0.0;
  Vec x0 = Vec::Constant(model.param_dim(4, 3), 0.05);

  auto aggregate_of = [&](const std::vector<DpuDataset>& parts) {
    std::vector<double> sizes;
    std::vector<Vec> grads;
    for (const auto& p : parts) {
      LocalRunConfig cfg{1, 1.0, 21};
      auto res = local_train(model, x0, p, cfg, hp);
      sizes.push_back(p.size());
      grads.push_back(normalized_accum_gradient(x0, res.x_final, 1, hp));
    }
    return global_aggregate(x0, sizes, grads, hp);
  };

  std::vector<int> left, right;
  for (int i = 0; i < ds.size(); ++i) (i < 10 ? left : right).push_back(i);
  Vec whole = aggregate_of({ds});
  Vec split = aggregate_of({ds.subset(left), ds.subset(right)});
  CHECK((whole - split).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp model gradient is consistent with finite differences") {
  MlpModel model(8);
  Rng rng(23);
  auto ds = random_mixture(6, rng);
  int dim = model.param_dim(4, 3);
  std::normal_distribution<double> normal(0.0, 0.5);
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x(i) = normal(rng);
  Vec g = model.mean_grad(x, ds);
  double h = 1e-6;
  for (int k = 0; k < dim; k += 7) {
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    double fd = (model.mean_loss(xp, ds) - model.mean_loss(xm, ds)) / (2.0 * h);
    CHECK(g(k) == doctest::Approx(fd).epsilon(1e-4));
  }
}
