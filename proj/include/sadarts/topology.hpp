#pragma once

#include <optional>
#include <string>
#include <vector>

namespace sadarts {

struct CellEdge {
  int src = 0;
  int dst = 0;
  /// Set for edges that are not searched; they always run this op.
  std::optional<std::string> fixed_op;

  bool searchable() const { return !fixed_op.has_value(); }
};

/// Cell DAG shared by every cell of one type.
///
/// Searchable edges share one candidate list; row r of an alpha table
/// belongs to the r-th searchable edge in `edges` order, column j to
/// candidates[j].
struct CellTopology {
  std::string space;
  int num_nodes = 0;
  int num_inputs = 1;
  std::vector<CellEdge> edges;
  std::vector<std::string> candidates;
  /// Output is the channel concat of all intermediate nodes (DARTS) rather
  /// than the last node.
  bool concat_output = false;
  /// Incoming edges kept per node at derivation; 0 keeps all.
  int keep_per_node = 0;

  std::vector<int> searchable_edges() const;
  int num_searchable() const;
  std::vector<int> incoming(int node) const;
  std::vector<int> intermediate_nodes() const;
  int output_node() const;
  int candidate_index(const std::string& op) const;

  /// Throws ContractError / CatalogError when the topology is malformed.
  void validate() const;
};

/// Spaces: "darts" (7-node bi-chain cell, 8 ops), "nb201" (4 nodes, 6 edges,
/// 5 ops), "reduced" (nb201 graph, {sep_conv3x3, skip_connect, avg_pool3x3}),
/// "micro" (nb201 graph, chain edges searched over {conv3x3, skip_connect,
/// avg_pool3x3}, the remaining edges fixed to skip_connect), "edge" (a single searchable
/// edge from input to output over the nb201 candidates).
CellTopology make_topology(const std::string& space);
const std::vector<std::string>& space_names();

struct GenotypeEdge {
  int src = 0;
  int dst = 0;
  std::string op;

  friend bool operator==(const GenotypeEdge&, const GenotypeEdge&) = default;
};

/// Discrete architecture: the kept searchable edges and their chosen ops.
/// Fixed edges are implied by the topology and not listed.
struct Genotype {
  std::string space;
  std::vector<GenotypeEdge> normal;
  std::vector<GenotypeEdge> reduce;

  std::string canonical() const;
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

std::string genotype_to_json(const Genotype& g);
Genotype genotype_from_json(const std::string& text);

/// Checks genotype/topology agreement; throws ContractError on mismatch.
void validate_genotype(const Genotype& g, const CellTopology& topo, bool has_reduce);

/// Every genotype of a keep-all topology, in lexicographic op-index order.
std::vector<Genotype> enumerate_genotypes(const CellTopology& topo);

}  // namespace sadarts
