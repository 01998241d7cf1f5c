#pragma once

#include "sadarts/mixed_ops.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sadarts {

/// Shape of the stacked network around the searched cells.
struct StackSpec {
  Index in_channels = 1;
  Index image_size = 8;
  Index channels = 8;
  int num_cells = 1;
  /// Cell positions that halve resolution and double width (darts only).
  std::vector<int> reduction_cells;
  int num_classes = 2;
  Index stem_kernel = 1;

  void validate(const CellTopology& topo) const;
};

/// Records the input of one edge during a forward pass.
struct EdgeCapture {
  int cell = 0;
  int edge = 0;
  Tensor input;
};

struct ForwardOptions {
  /// Required for supernets.
  const ArchParams* arch = nullptr;
  /// Required for supernets with partial channels; one permutation is drawn
  /// per mixed edge in forward order.
  Rng* channel_rng = nullptr;
  EdgeCapture* capture = nullptr;
};

/// A stem, a stack of cells and a ReLU/global-pool/linear head. Either a
/// supernet (every searchable edge is a mixture over all candidates) or a
/// discrete network (one op per kept edge).
class Network {
 public:
  Tensor forward(const Tensor& x, const ForwardOptions& opts = {}) const;

  std::vector<Tensor> parameters() const;
  Index parameter_count() const;
  /// Parameters living inside cell edges (excludes stem, preprocessing, head).
  Index cell_parameter_count() const;

  bool is_supernet() const { return supernet_; }
  bool has_reduce() const { return !stack_.reduction_cells.empty(); }
  const CellTopology& topology() const { return topo_; }
  const StackSpec& stack() const { return stack_; }
  const std::optional<PartialChannelConfig>& partial_channels() const { return pc_; }
  int num_cells() const { return int(cells_.size()); }
  bool is_reduction_cell(int cell) const { return cells_.at(std::size_t(cell)).reduction; }

  /// Candidate ops of topology edge `edge` in cell `cell` (supernet: all
  /// candidates in alpha column order; discrete: the single chosen op).
  std::vector<OperationPtr> edge_ops(int cell, int edge) const;

 private:
  friend Network build_supernet(const CellTopology&, const StackSpec&, std::uint64_t,
                                std::optional<PartialChannelConfig>);
  friend Network instantiate_discrete(const Genotype&, const CellTopology&, const StackSpec&, std::uint64_t);
  friend Network instantiate_discrete(const Genotype&, const Network&);

  struct EdgeInstance {
    int edge = 0;
    int alpha_row = -1;
    Index stride = 1;
    std::vector<OperationPtr> ops;
  };
  struct CellInstance {
    bool reduction = false;
    Index channels = 0;
    OperationPtr pre0;
    OperationPtr pre1;
    std::vector<EdgeInstance> edges;
  };

  Tensor edge_forward(const EdgeInstance& e, const Tensor& x, const CellArch* arch, const ForwardOptions& opts) const;

  CellTopology topo_;
  StackSpec stack_;
  bool supernet_ = false;
  std::optional<PartialChannelConfig> pc_;
  Tensor stem_;
  std::vector<CellInstance> cells_;
  Tensor head_weight_;
  Tensor head_bias_;
};

/// Deterministic supernet: the same seed gives bit-identical weights.
Network build_supernet(const CellTopology& topo, const StackSpec& stack, std::uint64_t seed,
                       std::optional<PartialChannelConfig> pc = std::nullopt);

/// Fresh discrete network containing only the genotype's ops.
Network instantiate_discrete(const Genotype& genotype, const CellTopology& topo, const StackSpec& stack,
                             std::uint64_t seed);

/// Discrete network sharing the supernet's weights for the chosen ops.
Network instantiate_discrete(const Genotype& genotype, const Network& supernet);

/// Parameters and multiply-adds of the genotype's chosen ops over all cells.
OpCost count_cost(const Genotype& genotype, const CellTopology& topo, const StackSpec& stack);

/// Per-candidate cost of a cell edge at the first cell's geometry; used as
/// the FLOPs penalty cost vector.
std::vector<double> candidate_costs(const CellTopology& topo, const StackSpec& stack);

}  // namespace sadarts
