#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sadarts/config_json.hpp"
#include "sadarts/errors.hpp"
#include "sadarts/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace sadarts;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.dataset.generator = "bars";
  cfg.dataset.samples = 48;
  cfg.dataset.seed = 3;
  cfg.stack.channels = 4;
  cfg.stack.num_classes = 4;
  cfg.steps = 6;
  cfg.batch_size = 8;
  return cfg;
}

const TabularBenchmark& tiny_bench() {
  static const TabularBenchmark b = build_benchmark("micro", tiny_config(), {0, 1});
  return b;
}

TrainConfig blobs_config() {
  TrainConfig cfg;
  cfg.dataset.generator = "blobs";
  cfg.dataset.samples = 64;
  cfg.dataset.seed = 5;
  cfg.stack.channels = 4;
  cfg.stack.num_classes = 2;
  cfg.steps = 40;
  cfg.batch_size = 8;
  return cfg;
}

}  // namespace

TEST_CASE("micro benchmark covers every genotype once") {
  const TabularBenchmark& b = tiny_bench();
  REQUIRE(b.entries.size() == 27);
  std::set<std::string> keys;
  for (const BenchmarkEntry& e : b.entries) {
    keys.insert(e.key);
    CHECK(e.key == e.genotype.canonical());
    CHECK(e.accuracies.size() == 2);
    for (double a : e.accuracies) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    CHECK(e.loss_curve.size() == 6);
    CHECK(e.loss_digest.size() == 64);
    CHECK(b.find(e.key) == &e);
  }
  CHECK(keys.size() == 27);
  CHECK(std::is_sorted(b.entries.begin(), b.entries.end(),
                       [](const BenchmarkEntry& x, const BenchmarkEntry& y) { return x.key < y.key; }));
}

TEST_CASE("benchmark rebuild is bit-identical, also on two threads") {
  const TabularBenchmark again = build_benchmark("micro", tiny_config(), {0, 1}, 2);
  REQUIRE(again.entries.size() == tiny_bench().entries.size());
  for (std::size_t i = 0; i < again.entries.size(); ++i) {
    CHECK(again.entries[i].accuracies == tiny_bench().entries[i].accuracies);
    CHECK(again.entries[i].loss_digest == tiny_bench().entries[i].loss_digest);
  }
  CHECK(again.config_hash == tiny_bench().config_hash);
}

TEST_CASE("ranks are a bijection with nonnegative regret") {
  const TabularBenchmark& b = tiny_bench();
  std::set<int> ranks;
  const BenchmarkEntry* best = nullptr;
  const BenchmarkEntry* worst = nullptr;
  for (const BenchmarkEntry& e : b.entries) {
    const Rank r = rank_of(b, e.genotype);
    ranks.insert(r.rank);
    CHECK(r.regret >= 0.0);
    CHECK(r.accuracy == e.mean_accuracy);
    if (r.rank == 1) best = &e;
    if (r.rank == 27) worst = &e;
  }
  CHECK(ranks.size() == 27);
  CHECK(*ranks.begin() == 1);
  CHECK(*ranks.rbegin() == 27);
  REQUIRE(best);
  REQUIRE(worst);
  CHECK(rank_of(b, best->genotype).regret == 0.0);
  for (const BenchmarkEntry& e : b.entries) {
    CHECK(e.mean_accuracy <= best->mean_accuracy);
    CHECK(e.mean_accuracy >= worst->mean_accuracy);
  }
  CHECK(regret_quantile(b, 0.0) == 0.0);
  CHECK(regret_quantile(b, 1.0) == rank_of(b, worst->genotype).regret);
  CHECK(regret_quantile(b, 0.1) <= regret_quantile(b, 0.5));
}

TEST_CASE("ties rank the smaller key first") {
  TabularBenchmark b = tiny_bench();
  for (BenchmarkEntry& e : b.entries) e.mean_accuracy = 0.5;
  CHECK(rank_of(b, b.entries.front().genotype).rank == 1);
  CHECK(rank_of(b, b.entries.back().genotype).rank == 27);
}

TEST_CASE("unknown genotype is a lookup error") {
  const CellTopology nb = make_topology("nb201");
  CHECK_THROWS_AS(rank_of(tiny_bench(), uniform_genotype(nb, "conv1x1")), LookupError);
}

TEST_CASE("spaces above the cap are refused before training") {
  TrainConfig cfg = tiny_config();
  CHECK_THROWS_AS(build_benchmark("nb201", cfg, {0}), ContractError);
  CHECK_THROWS_AS(build_benchmark("reduced", cfg, {0}), ContractError);
  CHECK_THROWS_AS(build_benchmark("micro", cfg, {}), ContractError);
}

TEST_CASE("benchmark json round trip and integrity") {
  const std::string text = benchmark_to_json(tiny_bench());
  const TabularBenchmark back = benchmark_from_json(text);
  CHECK(back.space == "micro");
  CHECK(back.config_hash == tiny_bench().config_hash);
  REQUIRE(back.entries.size() == 27);
  for (std::size_t i = 0; i < 27; ++i) {
    CHECK(back.entries[i].key == tiny_bench().entries[i].key);
    CHECK(back.entries[i].accuracies == tiny_bench().entries[i].accuracies);
    CHECK(back.entries[i].mean_accuracy == tiny_bench().entries[i].mean_accuracy);
  }

  Json j = Json::parse(text);
  j["train"]["steps"] = 7;
  CHECK_THROWS_AS(benchmark_from_json(j.dump()), IntegrityError);
  CHECK_THROWS_AS(benchmark_from_json("{]"), SchemaError);
  CHECK_THROWS_AS(benchmark_from_json(R"({"format":"other"})"), SchemaError);
}

TEST_CASE("all-none network scores the majority rate") {
  const TrainConfig cfg = blobs_config();
  const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.train_fraction, cfg.split_seed);
  const CellTopology nb = make_topology("nb201");
  const TrainOutcome o = train_discrete(uniform_genotype(nb, "none"), nb, cfg, 9, data);
  // balanced split: every class is a majority class
  CHECK(o.val_accuracy == doctest::Approx(data.data->majority_rate()).epsilon(1e-15));
  CHECK(o.val_accuracy == 0.5);
}

TEST_CASE("hand-written skip baseline matches the network trainer") {
  const TrainConfig cfg = blobs_config();
  const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.train_fraction, cfg.split_seed);
  for (const std::string space : {"nb201", "edge"}) {
    const CellTopology topo = make_topology(space);
    const TrainOutcome net = train_discrete(uniform_genotype(topo, "skip_connect"), topo, cfg, 4, data);
    const TrainOutcome base = train_skip_baseline(topo, cfg, 4, data);
    CAPTURE(space);
    CHECK(base.val_accuracy == net.val_accuracy);
    CHECK(std::abs(base.val_loss - net.val_loss) < 1e-9);
    REQUIRE(base.train_losses.size() == net.train_losses.size());
    for (std::size_t i = 0; i < net.train_losses.size(); ++i) {
      CHECK(std::abs(base.train_losses[i] - net.train_losses[i]) < 1e-9);
    }
    CHECK(base.param_count == net.param_count);
  }
}

TEST_CASE("train config contract") {
  TrainConfig cfg = blobs_config();
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = blobs_config();
  cfg.train_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = blobs_config();
  const SearchData data = make_search_data(make_dataset(cfg.dataset), cfg.train_fraction, cfg.split_seed);
  cfg.stack.num_classes = 4;
  const CellTopology nb = make_topology("nb201");
  CHECK_THROWS_AS(train_discrete(uniform_genotype(nb, "conv1x1"), nb, cfg, 0, data), ContractError);
}
