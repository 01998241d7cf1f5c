#include "sadarts/mixed_ops.hpp"

#include "sadarts/errors.hpp"

namespace sadarts {

std::vector<Tensor> ArchParams::alphas() const {
  std::vector<Tensor> out{normal.alpha};
  if (reduce) out.push_back(reduce->alpha);
  return out;
}

std::vector<Tensor> ArchParams::tensors() const {
  std::vector<Tensor> out = alphas();
  for (const Tensor& g : normal.gamma) out.push_back(g);
  if (reduce) {
    for (const Tensor& g : reduce->gamma) out.push_back(g);
  }
  return out;
}

ArchParams ArchParams::clone() const {
  auto copy = [](const CellArch& c) {
    CellArch out{c.alpha.clone(), {}};
    for (const Tensor& g : c.gamma) out.gamma.push_back(g.clone());
    return out;
  };
  ArchParams out{copy(normal), std::nullopt};
  if (reduce) out.reduce = copy(*reduce);
  return out;
}

ArchParams make_arch_params(const CellTopology& topo, bool has_reduce, bool with_gamma) {
  auto make = [&] {
    CellArch c;
    c.alpha = Tensor({Index(topo.num_searchable()), Index(topo.candidates.size())}, true);
    if (with_gamma) {
      for (int node : topo.intermediate_nodes()) c.gamma.push_back(Tensor({Index(topo.incoming(node).size())}, true));
    }
    return c;
  };
  ArchParams p{make(), std::nullopt};
  if (has_reduce) p.reduce = make();
  return p;
}

Eigen::VectorXd beta_of(const Eigen::VectorXd& alpha_row) {
  const double mx = alpha_row.maxCoeff();
  Eigen::VectorXd e = (alpha_row.array() - mx).exp().matrix();
  return e / e.sum();
}

Eigen::MatrixXd beta_table(const Tensor& alpha) {
  if (alpha.rank() != 2) throw DimensionError("beta_table: alpha must be 2-D, got " + shape_string(alpha.shape()));
  const Index rows = alpha.dim(0), cols = alpha.dim(1);
  Eigen::MatrixXd out(rows, cols);
  for (Index r = 0; r < rows; ++r) out.row(r) = beta_of(alpha.data().segment(r * cols, cols).matrix()).transpose();
  return out;
}

Index argmax_lowest(const Eigen::VectorXd& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

namespace {

std::vector<Tensor> apply_all(const Tensor& x, std::span<const OperationPtr> ops) {
  std::vector<Tensor> outs;
  outs.reserve(ops.size());
  for (const OperationPtr& op : ops) outs.push_back(op->forward(x));
  return outs;
}

}  // namespace

Tensor mixed_forward_beta(const Tensor& x, std::span<const OperationPtr> ops, const Tensor& beta) {
  if (ops.empty()) throw ContractError("mixed_forward: edge has no operations");
  const auto outs = apply_all(x, ops);
  return weighted_sum(outs, beta);
}

Tensor mixed_forward(const Tensor& x, std::span<const OperationPtr> ops, const Tensor& alpha_row) {
  return mixed_forward_beta(x, ops, softmax(alpha_row, 0));
}

Index partial_channel_width(Index channels, int k) {
  if (k <= 0) throw ContractError("partial channel ratio k must be positive");
  return channels / k;
}

Tensor partial_channel_forward(const Tensor& x, std::span<const OperationPtr> ops, const Tensor& beta, int k, Rng& rng,
                               Index stride, std::vector<Index>* permutation_out) {
  if (k <= 0) throw ContractError("partial channel ratio k must be positive");
  if (x.rank() != 4) throw DimensionError("partial_channel_forward: input must be NCHW, got " + shape_string(x.shape()));
  const Index c = x.dim(1);
  if (c < k) throw ContractError("partial_channel_forward: channel count below ratio k");
  const auto perm = permutation<Index>(rng, std::size_t(c));
  if (permutation_out) *permutation_out = perm;
  const Index width = partial_channel_width(c, k);
  const std::span<const Index> all(perm);

  Tensor mixed = mixed_forward_beta(channel_gather(x, all.first(std::size_t(width))), ops, beta);
  if (width == c) return mixed;
  Tensor rest = channel_gather(x, all.subspan(std::size_t(width)));
  if (stride != 1) rest = subsample(rest, stride);
  const std::vector<Tensor> parts{mixed, rest};
  return channel_concat(parts);
}

Tensor node_aggregate(std::span<const Tensor> edge_outputs, const Tensor& gamma) {
  if (edge_outputs.empty()) throw ContractError("node_aggregate: no incoming edges");
  if (gamma.defined()) {
    if (gamma.rank() != 1 || gamma.dim(0) != Index(edge_outputs.size())) {
      throw DimensionError("node_aggregate: gamma axis 0 must match the " + std::to_string(edge_outputs.size()) +
                           " incoming edges, got " + shape_string(gamma.shape()));
    }
    return weighted_sum(edge_outputs, softmax(gamma, 0));
  }
  Tensor acc = edge_outputs[0];
  for (std::size_t i = 1; i < edge_outputs.size(); ++i) acc = add(acc, edge_outputs[i]);
  return acc;
}

}  // namespace sadarts
