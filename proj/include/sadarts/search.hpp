#pragma once

#include "sadarts/data.hpp"
#include "sadarts/metrics.hpp"
#include "sadarts/network.hpp"
#include "sadarts/optim.hpp"
#include "sadarts/regularizers.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sadarts {

struct AlphaInit {
  enum class Strategy { small_random, constant_offset, constant_negative };
  Strategy strategy = Strategy::small_random;
  /// small_random: entries uniform in [-scale, scale].
  double scale = 1e-3;
  /// constant_offset: zeros, plus delta on column `op` of every row.
  std::string op = "skip_connect";
  double delta = 0.1;
  /// constant_negative: every entry equals value.
  double value = -1.0;
};

std::string strategy_name(AlphaInit::Strategy s);
AlphaInit::Strategy strategy_from_name(const std::string& name);

/// Architecture weights shaped for the topology and filled per `init`; edge
/// weights start at zero. Throws CatalogError when the offset op is not a
/// candidate of the topology.
ArchParams init_arch_params(const AlphaInit& init, const CellTopology& topo, bool has_reduce, bool with_gamma,
                            std::uint64_t seed);

struct SearchConfig {
  std::string space = "reduced";
  StackSpec stack;
  int epochs = 50;
  int warmup_epochs = 0;
  Index batch_size = 32;
  double train_fraction = 0.5;
  Adam::Options alpha_optimizer{};
  /// Unset: 0 with the smooth-activation regularizer, 1e-3 otherwise.
  std::optional<double> alpha_weight_decay;
  double weight_lr = 0.025;
  MomentumSgd::Options weight_optimizer{};
  double grad_clip = 5.0;
  AlphaInit alpha_init;
  /// 0 disables partial channels.
  int partial_channel_k = 0;
  bool edge_weights = false;
  RegularizerSpec regularizer;
  SelectionMode selection = SelectionMode::softmax;
  std::uint64_t seed = 0;

  /// Throws ContractError on inconsistent settings.
  void validate() const;
  double effective_alpha_weight_decay() const;
};

/// Training and validation views of one dataset.
struct SearchData {
  std::shared_ptr<const Dataset> data;
  DataSplit train;
  DataSplit val;
};

SearchData make_search_data(Dataset data, double train_fraction, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double lambda = 0.0;
  double weight_lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  /// Means over the architecture steps; NaN during warm-up.
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double reg_loss = 0.0;
  AlphaStats alpha;
  double min_gap = 0.0;
  double skip_fraction = 0.0;
  // Samples read from each split by each phase.
  long alpha_train_reads = 0;
  long alpha_val_reads = 0;
  long weight_train_reads = 0;
  long weight_val_reads = 0;
  /// Largest post-clip weight gradient norm seen this epoch.
  double max_clipped_norm = 0.0;
  /// Largest deviation of any softmax row sum from 1 after an alpha step.
  double max_row_sum_error = 0.0;
  std::string genotype;
  std::vector<double> alphas;
  std::vector<double> gammas;
};

struct SearchTrace {
  std::vector<std::string> alpha_columns;
  std::vector<std::string> gamma_columns;
  std::vector<EpochRecord> epochs;
};

std::string trace_to_csv(const SearchTrace& trace);
/// Parses the CSV written by trace_to_csv. Throws SchemaError naming any
/// missing column.
SearchTrace trace_from_csv(const std::string& text);

/// Everything needed to continue a search.
struct SearchState {
  SearchConfig config;
  CellTopology topology;
  Network net;
  ArchParams arch;
  std::optional<Adam> alpha_opt;
  std::optional<MomentumSgd> weight_opt;
  int epoch = 0;
  std::uint64_t step = 0;
  Rng data_rng;
  SearchTrace trace;
};

/// Fresh state: supernet weights from the seed, alpha from the init
/// strategy, the data generator seeded from seed + 1.
SearchState init_search(const SearchConfig& config);

/// One epoch: for each training batch, an architecture step on the next
/// validation batch (skipped during warm-up), then a weight step on the
/// training batch. Throws DivergenceError before applying any update whose
/// loss is not finite; the state then still holds the last good values.
void search_epoch(SearchState& state, const SearchData& data);

struct SearchResult {
  Genotype genotype;
  SearchTrace trace;
};

using EpochCallback = std::function<void(const SearchState&)>;

/// Runs the remaining epochs of `state` and derives the final genotype.
SearchResult continue_search(SearchState& state, const SearchData& data, const EpochCallback& on_epoch = {});

SearchResult run_search(const SearchConfig& config, const SearchData& data, const EpochCallback& on_epoch = {});

/// Lossless JSON container for a search state; version-tagged.
std::string checkpoint_to_json(const SearchState& state);
SearchState checkpoint_from_json(const std::string& text);

}  // namespace sadarts
