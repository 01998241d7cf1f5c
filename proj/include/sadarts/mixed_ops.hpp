#pragma once

#include "sadarts/ops_catalog.hpp"
#include "sadarts/topology.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace sadarts {

/// Architecture weights of one cell type: alpha [searchable edges x ops] and,
/// optionally, one edge-weight vector per intermediate node covering all of
/// that node's incoming edges (in topology edge order).
struct CellArch {
  Tensor alpha;
  std::vector<Tensor> gamma;

  bool has_gamma() const { return !gamma.empty(); }
};

struct ArchParams {
  CellArch normal;
  std::optional<CellArch> reduce;

  std::vector<Tensor> alphas() const;
  /// Every learnable tensor: alphas then gammas.
  std::vector<Tensor> tensors() const;
  ArchParams clone() const;
};

/// Zero-initialized parameters shaped for the topology.
ArchParams make_arch_params(const CellTopology& topo, bool has_reduce, bool with_gamma);

/// Softmax of one alpha row.
Eigen::VectorXd beta_of(const Eigen::VectorXd& alpha_row);

/// Row-wise softmax of an alpha table [edges x ops].
Eigen::MatrixXd beta_table(const Tensor& alpha);

/// Index of the largest entry; ties go to the lowest index.
Index argmax_lowest(const Eigen::VectorXd& v);

/// sum_o softmax(alpha_row)_o * o(x).
Tensor mixed_forward(const Tensor& x, std::span<const OperationPtr> ops, const Tensor& alpha_row);

/// sum_o beta_o * o(x) with explicit mixture weights.
Tensor mixed_forward_beta(const Tensor& x, std::span<const OperationPtr> ops, const Tensor& beta);

struct PartialChannelConfig {
  int k = 1;
};

/// Channels of x are permuted by a permutation drawn from rng; the first
/// floor(C/k) permuted channels go through the weighted mixture and the
/// rest are appended unchanged (subsampled when stride is 2). The ops must
/// be built for floor(C/k) channels. When `permutation_out` is non-null it
/// receives the permutation used.
Tensor partial_channel_forward(const Tensor& x, std::span<const OperationPtr> ops, const Tensor& beta, int k, Rng& rng,
                               Index stride = 1, std::vector<Index>* permutation_out = nullptr);

/// Number of channels routed through the mixture under ratio k.
Index partial_channel_width(Index channels, int k);

/// Plain sum of edge outputs, or softmax(gamma)-weighted sum when gamma is
/// defined.
Tensor node_aggregate(std::span<const Tensor> edge_outputs, const Tensor& gamma = Tensor());

}  // namespace sadarts
