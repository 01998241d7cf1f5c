#pragma once

#include "sadarts/data.hpp"
#include "sadarts/network.hpp"
#include "sadarts/optim.hpp"
#include "sadarts/search.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sadarts {

/// Training recipe for discrete networks.
struct TrainConfig {
  DatasetSpec dataset;
  StackSpec stack;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 0;
  int steps = 300;
  Index batch_size = 32;
  /// Cosine-annealed over `steps`.
  double lr = 0.05;
  MomentumSgd::Options sgd{};
  double grad_clip = 5.0;

  void validate() const;
};

struct TrainOutcome {
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  std::vector<double> train_losses;
  Index param_count = 0;
};

/// Trains the genotype's network from scratch (weights seeded by `seed`,
/// batch order by seed + 1) and evaluates it on the validation split.
TrainOutcome train_discrete(const Genotype& genotype, const CellTopology& topo, const TrainConfig& cfg,
                            std::uint64_t seed, const SearchData& data);

/// Trains the all-skip network with a hand-written backward pass: with every
/// edge a skip connection the cells only scale the stem output by the number
/// of input-output paths, leaving a logistic head over pooled stem features.
/// Requires a 1x1 stem and a keep-all topology.
TrainOutcome train_skip_baseline(const CellTopology& topo, const TrainConfig& cfg, std::uint64_t seed,
                                 const SearchData& data);

/// Genotype whose every searchable edge runs `op`.
Genotype uniform_genotype(const CellTopology& topo, const std::string& op);

struct BenchmarkEntry {
  std::string key;
  Genotype genotype;
  std::vector<double> accuracies;
  double mean_accuracy = 0.0;
  /// Population std over the training seeds.
  double std_accuracy = 0.0;
  Index param_count = 0;
  /// Mean training loss over each tenth of the run.
  std::vector<double> loss_curve;
  /// SHA-256 of the full per-step loss sequence.
  std::string loss_digest;
};

struct TabularBenchmark {
  std::string space;
  TrainConfig config;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  /// Sorted by key.
  std::vector<BenchmarkEntry> entries;

  const BenchmarkEntry* find(const std::string& key) const;
};

inline constexpr std::size_t kBenchmarkCap = 256;

/// Trains every genotype of the space once per seed, on up to `jobs`
/// threads. Throws ContractError when the space exceeds kBenchmarkCap.
TabularBenchmark build_benchmark(const std::string& space, const TrainConfig& cfg,
                                 const std::vector<std::uint64_t>& seeds, int jobs = 1);

/// Hash of the space, recipe and seeds; stored tables carry it.
std::string benchmark_config_hash(const std::string& space, const TrainConfig& cfg,
                                  const std::vector<std::uint64_t>& seeds);

std::string benchmark_to_json(const TabularBenchmark& bench);
/// Throws IntegrityError when the stored hash does not match the stored
/// configuration.
TabularBenchmark benchmark_from_json(const std::string& text);

struct Rank {
  int rank = 0;
  double regret = 0.0;
  double accuracy = 0.0;
};

/// Rank 1 is the best mean accuracy; ties go to the lexicographically
/// smaller key. Throws LookupError for a genotype missing from the table.
Rank rank_of(const TabularBenchmark& bench, const Genotype& genotype);

/// Regret at quantile q in [0, 1] of the table's regrets (linear
/// interpolation between order statistics).
double regret_quantile(const TabularBenchmark& bench, double q);

}  // namespace sadarts
