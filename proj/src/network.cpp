#include "sadarts/network.hpp"

#include "sadarts/errors.hpp"

#include <algorithm>
#include <map>

namespace sadarts {

void StackSpec::validate(const CellTopology& topo) const {
  if (in_channels <= 0 || channels <= 0 || image_size <= 0) throw ContractError("stack: sizes must be positive");
  if (num_cells < 1) throw ContractError("stack: need at least one cell");
  if (num_classes < 2) throw ContractError("stack: need at least two classes");
  if (stem_kernel <= 0 || stem_kernel % 2 == 0) throw ContractError("stack: stem kernel must be odd and positive");
  if (!reduction_cells.empty() && topo.num_inputs != 2) {
    throw ContractError("stack: reduction cells are only supported for two-input (bi-chain) cells");
  }
  Index size = image_size;
  for (int r : reduction_cells) {
    if (r < 0 || r >= num_cells) throw ContractError("stack: reduction position out of range");
    if (size % 2 != 0) throw ContractError("stack: image size not divisible by 2 at a reduction cell");
    size /= 2;
  }
}

namespace {

bool is_reduction(const StackSpec& stack, int cell) {
  return std::find(stack.reduction_cells.begin(), stack.reduction_cells.end(), cell) != stack.reduction_cells.end();
}

Index edge_stride(const CellTopology& topo, bool reduction, const CellEdge& e) {
  return reduction && e.src < topo.num_inputs ? 2 : 1;
}

}  // namespace

Tensor Network::edge_forward(const EdgeInstance& e, const Tensor& x, const CellArch* arch,
                             const ForwardOptions& opts) const {
  if (e.alpha_row < 0) return e.ops.front()->forward(x);
  if (!arch) throw ContractError("supernet forward requires architecture parameters");
  Tensor row = select_row(arch->alpha, e.alpha_row);
  if (pc_) {
    if (!opts.channel_rng) throw ContractError("partial-channel supernet forward requires a channel rng");
    return partial_channel_forward(x, e.ops, softmax(row, 0), pc_->k, *opts.channel_rng, e.stride);
  }
  return mixed_forward(x, e.ops, row);
}

Tensor Network::forward(const Tensor& x, const ForwardOptions& opts) const {
  if (x.rank() != 4 || x.dim(1) != stack_.in_channels) {
    throw DimensionError("network: input must be [N," + std::to_string(stack_.in_channels) + ",H,W], got " +
                         shape_string(x.shape()));
  }
  if (supernet_) {
    if (!opts.arch) throw ContractError("supernet forward requires architecture parameters");
    if (opts.arch->normal.alpha.dim(0) != topo_.num_searchable() ||
        opts.arch->normal.alpha.dim(1) != Index(topo_.candidates.size())) {
      throw DimensionError("network: alpha table " + shape_string(opts.arch->normal.alpha.shape()) +
                           " does not match the topology");
    }
    if (has_reduce() && !opts.arch->reduce) throw ContractError("network: missing reduction-cell alpha");
  }

  const Tensor stem = conv2d(x, stem_, ConvAttrs{1, stack_.stem_kernel / 2, 1, 1});
  Tensor s0 = stem, s1 = stem;
  for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
    const CellInstance& cell = cells_[ci];
    const CellArch* arch = nullptr;
    if (supernet_) arch = cell.reduction ? &*opts.arch->reduce : &opts.arch->normal;

    std::vector<Tensor> nodes(std::size_t(topo_.num_nodes));
    if (topo_.num_inputs == 2) {
      nodes[0] = cell.pre0->forward(s0);
      nodes[1] = cell.pre1->forward(s1);
    } else {
      nodes[0] = s1;
    }
    std::vector<Tensor> intermediates;
    for (int node : topo_.intermediate_nodes()) {
      std::vector<Tensor> outs;
      for (const EdgeInstance& e : cell.edges) {
        if (topo_.edges[std::size_t(e.edge)].dst != node) continue;
        const Tensor& in = nodes[std::size_t(topo_.edges[std::size_t(e.edge)].src)];
        if (opts.capture && opts.capture->cell == int(ci) && opts.capture->edge == e.edge) opts.capture->input = in;
        outs.push_back(edge_forward(e, in, arch, opts));
      }
      Tensor gamma;
      if (arch && arch->has_gamma()) {
        const auto& nodes_list = topo_.intermediate_nodes();
        const auto pos = std::find(nodes_list.begin(), nodes_list.end(), node) - nodes_list.begin();
        gamma = arch->gamma.at(std::size_t(pos));
      }
      nodes[std::size_t(node)] = node_aggregate(outs, gamma);
      intermediates.push_back(nodes[std::size_t(node)]);
    }
    Tensor out = topo_.concat_output ? channel_concat(intermediates) : nodes[std::size_t(topo_.output_node())];
    s0 = s1;
    s1 = out;
  }
  return linear(global_avg_pool(relu(s1)), head_weight_, head_bias_);
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out{stem_};
  auto add_op = [&](const OperationPtr& op) {
    if (!op) return;
    for (const Tensor& t : op->parameters()) out.push_back(t);
  };
  for (const CellInstance& c : cells_) {
    add_op(c.pre0);
    add_op(c.pre1);
    for (const EdgeInstance& e : c.edges) {
      for (const OperationPtr& op : e.ops) add_op(op);
    }
  }
  out.push_back(head_weight_);
  out.push_back(head_bias_);
  return out;
}

Index Network::parameter_count() const {
  Index n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

Index Network::cell_parameter_count() const {
  Index n = 0;
  for (const CellInstance& c : cells_) {
    for (const EdgeInstance& e : c.edges) {
      for (const OperationPtr& op : e.ops) {
        for (const Tensor& t : op->parameters()) n += t.numel();
      }
    }
  }
  return n;
}

std::vector<OperationPtr> Network::edge_ops(int cell, int edge) const {
  for (const EdgeInstance& e : cells_.at(std::size_t(cell)).edges) {
    if (e.edge == edge) return e.ops;
  }
  throw ContractError("edge_ops: edge " + std::to_string(edge) + " not present in cell " + std::to_string(cell));
}

namespace {

// Channel bookkeeping for the stacked cells, independent of weights.
struct CellGeometry {
  bool reduction;
  Index channels;
  Index prev_prev_channels;
  Index prev_channels;
  bool prev_was_reduction;
  Index out_channels;
  Index in_size;  // spatial size of the cell's node-1 input
};

std::vector<CellGeometry> plan_cells(const CellTopology& topo, const StackSpec& stack) {
  std::vector<CellGeometry> plan;
  const Index multiplier = topo.concat_output ? Index(topo.intermediate_nodes().size()) : 1;
  Index c_pp = stack.channels, c_p = stack.channels, c = stack.channels, size = stack.image_size;
  bool prev_red = false;
  for (int i = 0; i < stack.num_cells; ++i) {
    const bool red = is_reduction(stack, i);
    if (red) c *= 2;
    CellGeometry g{red, c, c_pp, c_p, prev_red, c * multiplier, size};
    plan.push_back(g);
    if (red) size /= 2;
    c_pp = c_p;
    c_p = g.out_channels;
    prev_red = red;
  }
  return plan;
}

}  // namespace

Network build_supernet(const CellTopology& topo, const StackSpec& stack, std::uint64_t seed,
                       std::optional<PartialChannelConfig> pc) {
  topo.validate();
  stack.validate(topo);
  Rng rng(seed);
  Network net;
  net.topo_ = topo;
  net.stack_ = stack;
  net.supernet_ = true;
  net.pc_ = pc;
  net.stem_ = kaiming_uniform({stack.channels, stack.in_channels, stack.stem_kernel, stack.stem_kernel},
                              stack.in_channels * stack.stem_kernel * stack.stem_kernel, rng);
  const auto searchable = topo.searchable_edges();
  for (const CellGeometry& g : plan_cells(topo, stack)) {
    Network::CellInstance cell;
    cell.reduction = g.reduction;
    cell.channels = g.channels;
    if (topo.num_inputs == 2) {
      cell.pre0 = make_relu_conv1x1(g.prev_prev_channels, g.channels, g.prev_was_reduction ? 2 : 1, rng);
      cell.pre1 = make_relu_conv1x1(g.prev_channels, g.channels, 1, rng);
    }
    for (std::size_t ei = 0; ei < topo.edges.size(); ++ei) {
      const CellEdge& edge = topo.edges[ei];
      Network::EdgeInstance inst;
      inst.edge = int(ei);
      inst.stride = edge_stride(topo, g.reduction, edge);
      if (edge.fixed_op) {
        inst.ops.push_back(make_operation(*edge.fixed_op, g.channels, g.channels, inst.stride, rng));
      } else {
        inst.alpha_row = int(std::find(searchable.begin(), searchable.end(), int(ei)) - searchable.begin());
        Index width = g.channels;
        if (pc) {
          width = partial_channel_width(g.channels, pc->k);
          if (width < 1) throw ContractError("partial channel ratio leaves no channel to mix");
        }
        for (const std::string& name : topo.candidates) {
          inst.ops.push_back(make_operation(name, width, width, inst.stride, rng));
        }
      }
      cell.edges.push_back(std::move(inst));
    }
    net.cells_.push_back(std::move(cell));
  }
  const Index c_last = plan_cells(topo, stack).back().out_channels;
  net.head_weight_ = kaiming_uniform({Index(stack.num_classes), c_last}, c_last, rng);
  net.head_bias_ = Tensor({Index(stack.num_classes)}, true);
  return net;
}

namespace {

std::map<std::pair<int, int>, std::string> gene_map(const std::vector<GenotypeEdge>& genes) {
  std::map<std::pair<int, int>, std::string> m;
  for (const auto& g : genes) m[{g.src, g.dst}] = g.op;
  return m;
}

}  // namespace

Network instantiate_discrete(const Genotype& genotype, const CellTopology& topo, const StackSpec& stack,
                             std::uint64_t seed) {
  topo.validate();
  stack.validate(topo);
  validate_genotype(genotype, topo, !stack.reduction_cells.empty());
  Rng rng(seed);
  Network net;
  net.topo_ = topo;
  net.stack_ = stack;
  net.stem_ = kaiming_uniform({stack.channels, stack.in_channels, stack.stem_kernel, stack.stem_kernel},
                              stack.in_channels * stack.stem_kernel * stack.stem_kernel, rng);
  const auto normal = gene_map(genotype.normal);
  const auto reduce = gene_map(genotype.reduce);
  for (const CellGeometry& g : plan_cells(topo, stack)) {
    Network::CellInstance cell;
    cell.reduction = g.reduction;
    cell.channels = g.channels;
    if (topo.num_inputs == 2) {
      cell.pre0 = make_relu_conv1x1(g.prev_prev_channels, g.channels, g.prev_was_reduction ? 2 : 1, rng);
      cell.pre1 = make_relu_conv1x1(g.prev_channels, g.channels, 1, rng);
    }
    const auto& genes = g.reduction ? reduce : normal;
    for (std::size_t ei = 0; ei < topo.edges.size(); ++ei) {
      const CellEdge& edge = topo.edges[ei];
      std::string op;
      if (edge.fixed_op) {
        op = *edge.fixed_op;
      } else {
        auto it = genes.find({edge.src, edge.dst});
        if (it == genes.end()) continue;
        op = it->second;
      }
      Network::EdgeInstance inst;
      inst.edge = int(ei);
      inst.stride = edge_stride(topo, g.reduction, edge);
      inst.ops.push_back(make_operation(op, g.channels, g.channels, inst.stride, rng));
      cell.edges.push_back(std::move(inst));
    }
    net.cells_.push_back(std::move(cell));
  }
  const Index c_last = plan_cells(topo, stack).back().out_channels;
  net.head_weight_ = kaiming_uniform({Index(stack.num_classes), c_last}, c_last, rng);
  net.head_bias_ = Tensor({Index(stack.num_classes)}, true);
  return net;
}

Network instantiate_discrete(const Genotype& genotype, const Network& supernet) {
  if (!supernet.is_supernet()) throw ContractError("instantiate_discrete: source network is not a supernet");
  if (supernet.partial_channels()) {
    throw ContractError("instantiate_discrete: partial-channel supernet ops are narrower than discrete ops");
  }
  const CellTopology& topo = supernet.topology();
  validate_genotype(genotype, topo, supernet.has_reduce());
  Network net;
  net.topo_ = topo;
  net.stack_ = supernet.stack();
  net.stem_ = supernet.stem_;
  net.head_weight_ = supernet.head_weight_;
  net.head_bias_ = supernet.head_bias_;
  const auto normal = gene_map(genotype.normal);
  const auto reduce = gene_map(genotype.reduce);
  for (const auto& src_cell : supernet.cells_) {
    Network::CellInstance cell;
    cell.reduction = src_cell.reduction;
    cell.channels = src_cell.channels;
    cell.pre0 = src_cell.pre0;
    cell.pre1 = src_cell.pre1;
    const auto& genes = cell.reduction ? reduce : normal;
    for (const auto& e : src_cell.edges) {
      const CellEdge& edge = topo.edges[std::size_t(e.edge)];
      Network::EdgeInstance inst;
      inst.edge = e.edge;
      inst.stride = e.stride;
      if (edge.fixed_op) {
        inst.ops = e.ops;
      } else {
        auto it = genes.find({edge.src, edge.dst});
        if (it == genes.end()) continue;
        inst.ops.push_back(e.ops.at(std::size_t(topo.candidate_index(it->second))));
      }
      cell.edges.push_back(std::move(inst));
    }
    net.cells_.push_back(std::move(cell));
  }
  return net;
}

OpCost count_cost(const Genotype& genotype, const CellTopology& topo, const StackSpec& stack) {
  stack.validate(topo);
  validate_genotype(genotype, topo, !stack.reduction_cells.empty());
  const auto normal = gene_map(genotype.normal);
  const auto reduce = gene_map(genotype.reduce);
  OpCost total;
  for (const CellGeometry& g : plan_cells(topo, stack)) {
    const auto& genes = g.reduction ? reduce : normal;
    for (const CellEdge& edge : topo.edges) {
      std::string op;
      if (edge.fixed_op) {
        op = *edge.fixed_op;
      } else {
        auto it = genes.find({edge.src, edge.dst});
        if (it == genes.end()) continue;
        op = it->second;
      }
      const Index size = g.reduction && edge.src >= topo.num_inputs ? g.in_size / 2 : g.in_size;
      const OpCost c = op_cost(op, g.channels, g.channels, edge_stride(topo, g.reduction, edge), size, size);
      total.params += c.params;
      total.mult_adds += c.mult_adds;
    }
  }
  return total;
}

std::vector<double> candidate_costs(const CellTopology& topo, const StackSpec& stack) {
  std::vector<double> out;
  for (const std::string& name : topo.candidates) {
    out.push_back(double(op_cost(name, stack.channels, stack.channels, 1, stack.image_size, stack.image_size).mult_adds));
  }
  return out;
}

}  // namespace sadarts
