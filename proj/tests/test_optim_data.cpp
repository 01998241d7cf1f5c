#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sadarts/data.hpp"
#include "sadarts/errors.hpp"
#include "sadarts/optim.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace sadarts;
using sadarts::testing::random_tensor;

TEST_CASE("clipping bounds the global norm and keeps the direction") {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<Tensor> params{random_tensor({3, 4}, rng, -1, 1), random_tensor({7}, rng, -1, 1)};
    const double scale = uniform(rng, 0.1, 50.0);
    std::vector<Array> raw;
    for (const Tensor& p : params) {
      Array g(p.numel());
      for (Index i = 0; i < g.size(); ++i) g[i] = scale * uniform(rng, -1, 1);
      p.accumulate_grad(g);
      raw.push_back(g);
    }
    double sq = 0.0;
    for (const Array& g : raw) sq += g.square().sum();
    const double before = clip_grad_norm(params, 5.0);
    CHECK(std::abs(before - std::sqrt(sq)) < 1e-12 * std::max(1.0, before));
    const double after = grad_norm(params);
    CHECK(after <= 5.0 + 1e-9);
    if (before <= 5.0) CHECK(after == before);
    const double factor = before > 5.0 ? 5.0 / before : 1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK((params[i].grad() - factor * raw[i]).abs().maxCoeff() < 1e-12 * scale);
    }
  }
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0.025, 0, 50) == 0.025);
  CHECK(cosine_lr(0.025, 50, 50) <= 1e-8 * 0.025);
  CHECK(std::abs(cosine_lr(0.025, 25, 50) - 0.0125) < 1e-15);
  for (int e = 1; e <= 50; ++e) CHECK(cosine_lr(1.0, e, 50) < cosine_lr(1.0, e - 1, 50));
}

TEST_CASE("adam follows the bias-corrected update") {
  Tensor p = Tensor::vector({1.0, -2.0, 0.5}, true);
  Adam::Options o;
  o.lr = 0.1;
  o.weight_decay = 0.01;
  Adam adam({p}, o);
  const Array g1 = Array::Map(std::vector<double>{0.3, -1.0, 2.0}.data(), 3);
  const Array g2 = Array::Map(std::vector<double>{-0.1, 0.5, 0.0}.data(), 3);

  Array x = p.data(), m = Array::Zero(3), v = Array::Zero(3);
  int t = 0;
  for (const Array* g : {&g1, &g2}) {
    p.zero_grad();
    p.accumulate_grad(*g);
    adam.step();
    ++t;
    const Array gd = *g + 0.01 * x;
    m = 0.5 * m + 0.5 * gd;
    v = 0.999 * v + 0.001 * gd.square();
    const Array mh = m / (1.0 - std::pow(0.5, t));
    const Array vh = v / (1.0 - std::pow(0.999, t));
    x = x - 0.1 * mh / (vh.sqrt() + 1e-8);
    CHECK((p.data() - x).abs().maxCoeff() < 1e-15);
  }
  // a parameter without a gradient is left alone
  p.zero_grad();
  const Array before = p.data();
  adam.step();
  CHECK((p.data() == before).all());
}

TEST_CASE("momentum sgd starts its buffer from the first gradient") {
  Tensor p = Tensor::vector({1.0, -1.0}, true);
  MomentumSgd sgd({p}, {0.9, 0.1});
  p.accumulate_grad(Array::Constant(2, 1.0));
  sgd.step(0.5);
  // buf = g + wd * w = [1.1, 0.9]
  CHECK(std::abs(p[0] - (1.0 - 0.55)) < 1e-15);
  CHECK(std::abs(p[1] - (-1.0 - 0.45)) < 1e-15);
  p.zero_grad();
  p.accumulate_grad(Array::Constant(2, 1.0));
  const double w0 = p[0];
  sgd.step(0.5);
  CHECK(std::abs(p[0] - (w0 - 0.5 * (0.9 * 1.1 + 1.0 + 0.1 * w0))) < 1e-15);
}

TEST_CASE("datasets are seeded and balanced") {
  for (const std::string& gen : generator_names()) {
    DatasetSpec spec;
    spec.generator = gen;
    spec.samples = 40;
    spec.seed = 3;
    const Dataset a = make_dataset(spec), b = make_dataset(spec);
    CAPTURE(gen);
    CHECK((a.images == b.images).all());
    CHECK(a.labels == b.labels);
    CHECK(a.images.size() == 40 * 8 * 8);
    CHECK(a.images.allFinite());
    CHECK(std::abs(a.majority_rate() - 1.0 / a.num_classes) < 1e-15);
    spec.seed = 4;
    CHECK(!(make_dataset(spec).images == a.images).all());
  }
  DatasetSpec bad;
  bad.generator = "cifar";
  CHECK_THROWS_AS(make_dataset(bad), SchemaError);
}

TEST_CASE("splits are disjoint, covering and seeded") {
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[std::size_t(i)] = i % 4;
  const auto [a, b] = make_splits(labels, 0.5, 9);
  CHECK(a.size() == 50);
  CHECK(b.size() == 50);
  std::set<int> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);
  const auto again = make_splits(labels, 0.5, 9);
  CHECK(again.first == a);
  CHECK(again.second == b);
  CHECK(make_splits(labels, 0.5, 10).first != a);
  // each class lands in the first part 12 or 13 times
  for (int c = 0; c < 4; ++c) {
    const auto n = std::count_if(a.begin(), a.end(), [&](int i) { return labels[std::size_t(i)] == c; });
    CHECK((n == 12 || n == 13));
  }
  CHECK_THROWS_AS(make_splits(labels, 0.0, 1), ContractError);
  CHECK_THROWS_AS(make_splits(labels, 1.0, 1), ContractError);
  CHECK_THROWS_AS(make_splits({0, 1}, 0.1, 1), ContractError);
}

TEST_CASE("split reads are counted and batches cover the split") {
  DatasetSpec spec;
  spec.samples = 20;
  const Dataset d = make_dataset(spec);
  std::vector<int> idx(10);
  std::iota(idx.begin(), idx.end(), 5);
  const DataSplit split(&d, idx);
  Rng rng(2);
  const auto batches = shuffled_batches(split.size(), 4, rng);
  CHECK(batches.size() == 3);
  CHECK(batches.back().size() == 2);
  std::set<int> seen;
  for (const auto& b : batches) {
    const Batch got = split.batch(b);
    CHECK(got.x.shape() == Shape{Index(b.size()), 1, 8, 8});
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(got.labels[i] == d.labels[std::size_t(idx[std::size_t(b[i])])]);
    seen.insert(b.begin(), b.end());
  }
  CHECK(seen.size() == 10);
  CHECK(split.reads() == 10);
  CHECK(split.all().labels.size() == 10);
  CHECK(split.reads() == 20);
}
