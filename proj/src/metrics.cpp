#include "sadarts/metrics.hpp"

#include "sadarts/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace sadarts {

namespace {

double gamma_weight(const CellArch& cell, const CellTopology& topo, int edge, SelectionMode mode) {
  if (!cell.has_gamma()) return 1.0;
  const int node = topo.edges[std::size_t(edge)].dst;
  const auto nodes = topo.intermediate_nodes();
  const auto node_pos = std::size_t(std::find(nodes.begin(), nodes.end(), node) - nodes.begin());
  const auto incoming = topo.incoming(node);
  const auto pos = Index(std::find(incoming.begin(), incoming.end(), edge) - incoming.begin());
  const Tensor& g = cell.gamma.at(node_pos);
  if (mode == SelectionMode::raw) return g[pos];
  const Eigen::VectorXd w = beta_of(g.data().matrix());
  return w[pos];
}

struct EdgeChoice {
  int edge = 0;
  int op = 0;
  double strength = 0.0;
};

std::vector<GenotypeEdge> derive_cell(const CellArch& cell, const CellTopology& topo, SelectionMode mode) {
  const auto searchable = topo.searchable_edges();
  const Index ops = Index(topo.candidates.size());
  if (cell.alpha.dim(0) != Index(searchable.size()) || cell.alpha.dim(1) != ops) {
    throw DimensionError("derive: alpha table " + shape_string(cell.alpha.shape()) + " does not match the topology");
  }
  const int none = topo.candidate_index("none");
  const Eigen::MatrixXd beta = beta_table(cell.alpha);
  const bool raw = mode == SelectionMode::raw && cell.has_gamma();

  std::vector<EdgeChoice> choices;
  for (std::size_t r = 0; r < searchable.size(); ++r) {
    const int edge = searchable[r];
    const double gw = gamma_weight(cell, topo, edge, mode);
    int best = -1;
    double best_value = 0.0;
    for (Index o = 0; o < ops; ++o) {
      if (int(o) == none && ops > 1) continue;
      const double value = raw ? cell.alpha[Index(r) * ops + o] * gw : beta(Index(r), o) * gw;
      if (best < 0 || value > best_value) {
        best = int(o);
        best_value = value;
      }
    }
    choices.push_back({edge, best, best_value});
  }

  std::vector<bool> kept(choices.size(), topo.keep_per_node <= 0);
  if (topo.keep_per_node > 0) {
    for (int node : topo.intermediate_nodes()) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < choices.size(); ++i) {
        if (topo.edges[std::size_t(choices[i].edge)].dst == node) rows.push_back(i);
      }
      std::stable_sort(rows.begin(), rows.end(),
                       [&](std::size_t a, std::size_t b) { return choices[a].strength > choices[b].strength; });
      for (std::size_t i = 0; i < rows.size() && i < std::size_t(topo.keep_per_node); ++i) kept[rows[i]] = true;
    }
  }

  std::vector<GenotypeEdge> out;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (!kept[i]) continue;
    const CellEdge& e = topo.edges[std::size_t(choices[i].edge)];
    out.push_back({e.src, e.dst, topo.candidates[std::size_t(choices[i].op)]});
  }
  return out;
}

void add_dispersion(DispersionReport& report, const CellArch& cell, const std::string& table) {
  const Eigen::MatrixXd beta = beta_table(cell.alpha);
  for (Index r = 0; r < beta.rows(); ++r) {
    EdgeDispersion d;
    d.table = table;
    d.row = int(r);
    for (Index c = 0; c < beta.cols(); ++c) d.sorted_beta.push_back(beta(r, c));
    std::sort(d.sorted_beta.begin(), d.sorted_beta.end(), std::greater<>());
    d.gap = d.sorted_beta.size() > 1 ? d.sorted_beta[0] - d.sorted_beta[1] : 1.0;
    report.edges.push_back(std::move(d));
  }
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double population_covariance(const Array& a, const Array& b) {
  return ((a - a.mean()) * (b - b.mean())).mean();
}

int argmax_row(const Array& logits, Index row, Index cols) {
  Index best = 0;
  for (Index c = 1; c < cols; ++c) {
    if (logits[row * cols + c] > logits[row * cols + best]) best = c;
  }
  return int(best);
}

}  // namespace

Genotype derive(const ArchParams& arch, const CellTopology& topo, SelectionMode mode) {
  Genotype g;
  g.space = topo.space;
  g.normal = derive_cell(arch.normal, topo, mode);
  if (arch.reduce) g.reduce = derive_cell(*arch.reduce, topo, mode);
  return g;
}

DispersionReport dispersion_report(const ArchParams& arch) {
  DispersionReport report;
  add_dispersion(report, arch.normal, "normal");
  if (arch.reduce) add_dispersion(report, *arch.reduce, "reduce");
  for (std::size_t i = 0; i < report.edges.size(); ++i) {
    if (report.edges[i].gap < report.edges[report.worst_edge].gap) report.worst_edge = i;
  }
  report.min_gap = report.edges.empty() ? 0.0 : report.edges[report.worst_edge].gap;
  return report;
}

GapSummary summarize_gaps(std::span<const DispersionReport> trials) {
  if (trials.empty()) throw ContractError("summarize_gaps: no trials");
  std::vector<double> gaps;
  for (const auto& t : trials) gaps.push_back(t.min_gap);
  const AlphaStats s = alpha_stats(gaps);
  return {s.mean, s.std, s.median, trials.size()};
}

AlphaStats alpha_stats(std::span<const double> values) {
  if (values.empty()) throw ContractError("alpha_stats: no values");
  const Eigen::Map<const Array> a(values.data(), Index(values.size()));
  AlphaStats s;
  s.mean = a.mean();
  s.std = std::sqrt((a - s.mean).square().mean());
  s.median = median_of(std::vector<double>(values.begin(), values.end()));
  return s;
}

std::vector<double> flatten_alphas(const ArchParams& arch) {
  std::vector<double> out;
  for (const Tensor& t : arch.alphas()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

AlphaStats alpha_stats(const ArchParams& arch) { return alpha_stats(flatten_alphas(arch)); }

VarianceDiagnostics variance_diagnostics(const Network& net, const ArchParams& arch, int cell, int edge,
                                         const Tensor& x) {
  if (x.dim(0) < 2) throw ContractError("variance_diagnostics: batch needs at least two samples");
  if (!net.is_supernet()) throw ContractError("variance_diagnostics: needs a supernet");
  if (net.partial_channels()) throw ContractError("variance_diagnostics: partial-channel supernets are not supported");
  const CellTopology& topo = net.topology();
  const auto searchable = topo.searchable_edges();
  const auto it = std::find(searchable.begin(), searchable.end(), edge);
  if (it == searchable.end()) throw ContractError("variance_diagnostics: edge is not searchable");
  const Index row = Index(it - searchable.begin());
  const CellArch& table = net.is_reduction_cell(cell) ? *arch.reduce : arch.normal;

  NoGradGuard guard;
  EdgeCapture capture{cell, edge, Tensor()};
  net.forward(x, {&arch, nullptr, &capture});
  const Index cols = table.alpha.dim(1);
  return variance_diagnostics(capture.input, net.edge_ops(cell, edge),
                              table.alpha.data().segment(row * cols, cols).matrix());
}

VarianceDiagnostics variance_diagnostics(const Tensor& in, std::span<const OperationPtr> ops,
                                         const Eigen::VectorXd& alpha_row) {
  if (in.dim(0) < 2) throw ContractError("variance_diagnostics: batch needs at least two samples");
  if (Index(ops.size()) != alpha_row.size()) throw DimensionError("variance_diagnostics: one alpha per op required");
  NoGradGuard guard;
  const Index k = Index(ops.size());
  const Eigen::VectorXd beta = beta_of(alpha_row);

  std::vector<Array> outs;
  for (const auto& op : ops) outs.push_back(op->forward(in).data());
  Array mixed = Array::Zero(outs[0].size());
  for (Index i = 0; i < k; ++i) mixed += beta[i] * outs[std::size_t(i)];

  VarianceDiagnostics d;
  d.covariance = Eigen::MatrixXd::Zero(k, k);
  std::vector<Array> dev;
  for (Index i = 0; i < k; ++i) {
    d.ops.push_back(ops[std::size_t(i)]->name());
    d.beta.push_back(beta[i]);
    dev.push_back(outs[std::size_t(i)] - mixed);
  }
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) d.covariance(i, j) = population_covariance(dev[std::size_t(i)], dev[std::size_t(j)]);
    d.variance.push_back(d.covariance(i, i));
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d.covariance);
  const double top = eig.eigenvalues().maxCoeff();
  if (top > 0.0 && eig.eigenvalues().minCoeff() > 1e-12 * top) {
    const Eigen::VectorXd w = d.covariance.ldlt().solve(Eigen::VectorXd::Ones(k));
    const Eigen::VectorXd b = w / w.sum();
    d.lagrange_beta.assign(b.data(), b.data() + k);
  }

  auto index_of = [&](const std::string& name) {
    return int(std::find(d.ops.begin(), d.ops.end(), name) - d.ops.begin());
  };
  const int c = std::min(index_of("conv3x3"), index_of("sep_conv3x3"));
  const int s = index_of("skip_connect"), a = index_of("avg_pool3x3");
  if (k == 3 && c < 3 && s < 3 && a < 3) {
    d.three_op = true;
    const double vc = d.variance[std::size_t(c)], vs = d.variance[std::size_t(s)], va = d.variance[std::size_t(a)];
    d.rhs_conv = vs + va;
    d.rhs_skip = vc + va;
    d.rhs_avg = vc + vs;
    d.joint_covariance = d.covariance(c, s) + d.covariance(c, a) + d.covariance(s, a);
    const double exp_sum = alpha_row.array().exp().sum();
    d.implied_constant = exp_sum - (2.0 * (vc + vs + va) - 3.0 * d.joint_covariance);
    d.conv_avg_skip_order = vc > va && va > vs;
  }
  return d;
}

EvalMetrics evaluate(const Network& net, const ArchParams* arch, const Batch& batch, std::uint64_t channel_seed) {
  NoGradGuard guard;
  Rng channel(channel_seed);
  const Tensor logits = net.forward(batch.x, {arch, &channel, nullptr});
  EvalMetrics m;
  m.loss = cross_entropy(logits, batch.labels).item();
  const Index n = logits.dim(0), cols = logits.dim(1);
  long correct = 0;
  for (Index i = 0; i < n; ++i) correct += argmax_row(logits.data(), i, cols) == batch.labels[std::size_t(i)];
  m.accuracy = double(correct) / double(n);
  return m;
}

std::pair<std::vector<double>, std::vector<double>> landscape_directions(const ArchParams& arch, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&] {
    std::vector<double> d;
    for (const Tensor& t : arch.alphas()) {
      const Index rows = t.dim(0), cols = t.dim(1);
      for (Index r = 0; r < rows; ++r) {
        Array dir(cols);
        for (Index c = 0; c < cols; ++c) dir[c] = standard_normal(rng);
        const double target = t.data().segment(r * cols, cols).matrix().norm();
        const double norm = dir.matrix().norm();
        dir *= (target > 0.0 ? target : 1.0) / norm;
        d.insert(d.end(), dir.begin(), dir.end());
      }
    }
    return d;
  };
  auto d1 = draw();
  auto d2 = draw();
  return {d1, d2};
}

LandscapeGrid landscape_scan(const Network& net, const ArchParams& arch, const Batch& batch,
                             std::span<const double> coords, std::uint64_t seed) {
  std::vector<double> sorted(coords.begin(), coords.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != -sorted[sorted.size() - 1 - i]) throw ContractError("landscape_scan: grid must be symmetric");
  }
  const auto [d1, d2] = landscape_directions(arch, seed);
  const std::vector<double> base = flatten_alphas(arch);
  ArchParams probe = arch.clone();
  const std::vector<Tensor> tables = probe.alphas();

  LandscapeGrid grid;
  grid.coords.assign(coords.begin(), coords.end());
  grid.center_loss = evaluate(net, &arch, batch).loss;
  double delta_sum = 0.0;
  long delta_count = 0;
  for (double a : coords) {
    std::vector<double> loss_row, acc_row;
    for (double b : coords) {
      std::size_t k = 0;
      for (const Tensor& t : tables) {
        Tensor table = t;
        for (Index i = 0; i < table.numel(); ++i, ++k) table.data()[i] = base[k] + (a * d1[k] + b * d2[k]);
      }
      const EvalMetrics m = evaluate(net, &probe, batch);
      loss_row.push_back(m.loss);
      acc_row.push_back(m.accuracy);
      if (a * a + b * b <= 1.0) {
        delta_sum += std::abs(m.loss - grid.center_loss);
        ++delta_count;
      }
    }
    grid.loss.push_back(std::move(loss_row));
    grid.accuracy.push_back(std::move(acc_row));
  }
  grid.mean_abs_delta_unit_ball = delta_count ? delta_sum / double(delta_count) : 0.0;
  return grid;
}

DiscrepancyGap discrepancy_gap(const Network& supernet, const ArchParams& arch, const Genotype& genotype,
                               const Batch& batch) {
  DiscrepancyGap gap;
  gap.supernet = evaluate(supernet, &arch, batch);
  const Network child = instantiate_discrete(genotype, supernet);
  gap.discrete = evaluate(child, nullptr, batch);
  gap.loss_gap = std::abs(gap.supernet.loss - gap.discrete.loss);
  gap.accuracy_gap = std::abs(gap.supernet.accuracy - gap.discrete.accuracy);
  return gap;
}

double skip_fraction(const ArchParams& arch, const CellTopology& topo) {
  const int skip = topo.candidate_index("skip_connect");
  const int none = topo.candidate_index("none");
  long total = 0, hits = 0;
  for (const Tensor& t : arch.alphas()) {
    const Index rows = t.dim(0), cols = t.dim(1);
    for (Index r = 0; r < rows; ++r) {
      int best = -1;
      for (Index c = 0; c < cols; ++c) {
        if (int(c) == none) continue;
        if (best < 0 || t.data()[r * cols + c] > t.data()[r * cols + best]) best = int(c);
      }
      ++total;
      hits += best == skip;
    }
  }
  return total ? double(hits) / double(total) : 0.0;
}

}  // namespace sadarts
