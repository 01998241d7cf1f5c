#pragma once

#include "sadarts/data.hpp"
#include "sadarts/network.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sadarts {

/// How edge weights enter the selection value when a cell has them.
enum class SelectionMode {
  /// softmax(alpha)_o * softmax(gamma)_e
  softmax,
  /// alpha_o * gamma_e
  raw,
};

/// Discretizes architecture weights: per searchable edge the strongest op
/// other than `none` (ties to the lowest index); for topologies that keep a
/// fixed number of inputs per node, the edges whose chosen op has the
/// largest selection value. Without edge weights the selection value is the
/// op's softmax weight, so adding a constant to a row never changes the
/// result.
Genotype derive(const ArchParams& arch, const CellTopology& topo, SelectionMode mode = SelectionMode::softmax);

struct EdgeDispersion {
  std::string table;
  int row = 0;
  std::vector<double> sorted_beta;
  double gap = 0.0;
};

struct DispersionReport {
  std::vector<EdgeDispersion> edges;
  /// Index into `edges` of the edge with the smallest top-2 gap.
  std::size_t worst_edge = 0;
  double min_gap = 0.0;
};

DispersionReport dispersion_report(const ArchParams& arch);

struct GapSummary {
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  std::size_t trials = 0;
};

/// Statistics of the worst-edge gap across trials. Throws ContractError for
/// an empty list.
GapSummary summarize_gaps(std::span<const DispersionReport> trials);

struct AlphaStats {
  double mean = 0.0;
  double median = 0.0;
  /// Population convention (divide by N).
  double std = 0.0;
};

AlphaStats alpha_stats(std::span<const double> values);
AlphaStats alpha_stats(const ArchParams& arch);
/// Every alpha entry, normal table first.
std::vector<double> flatten_alphas(const ArchParams& arch);

/// Empirical spread of each candidate op of one edge around the current
/// mixed output m = sum_o beta_o o(x).
struct VarianceDiagnostics {
  std::vector<std::string> ops;
  std::vector<double> beta;
  /// Var(o(x) - m) per op, over every element of the batch.
  std::vector<double> variance;
  /// Cov(o_i(x) - m, o_j(x) - m).
  Eigen::MatrixXd covariance;
  /// Mixture weights minimizing Var(sum_o b_o (o(x) - m)) subject to
  /// sum b = 1; empty when the covariance is singular.
  std::vector<double> lagrange_beta;

  // Filled when the edge holds exactly conv3x3, skip_connect and avg_pool3x3.
  bool three_op = false;
  double rhs_conv = 0.0;  // Var(x - m) + Var(o_a - m)
  double rhs_skip = 0.0;  // Var(o_c - m) + Var(o_a - m)
  double rhs_avg = 0.0;   // Var(o_c - m) + Var(x - m)
  /// Sum of the three pairwise covariances.
  double joint_covariance = 0.0;
  /// sum exp(alpha) - (2 sum Var - 3 joint_covariance): the constant the
  /// exponential-sum relation leaves implied.
  double implied_constant = 0.0;
  /// Var(o_c - m) > Var(o_a - m) > Var(x - m).
  bool conv_avg_skip_order = false;
};

/// Diagnostics for searchable edge `edge` (topology edge index) of cell
/// `cell`, evaluated on `x`. Throws ContractError when the batch has fewer
/// than two samples.
VarianceDiagnostics variance_diagnostics(const Network& net, const ArchParams& arch, int cell, int edge,
                                         const Tensor& x);

/// Same diagnostics for explicit ops applied to the edge input `in`.
VarianceDiagnostics variance_diagnostics(const Tensor& in, std::span<const OperationPtr> ops,
                                         const Eigen::VectorXd& alpha_row);

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and accuracy without recording gradients. For
/// partial-channel supernets the channel permutations come from a generator
/// seeded with `channel_seed`.
EvalMetrics evaluate(const Network& net, const ArchParams* arch, const Batch& batch, std::uint64_t channel_seed = 0);

struct LandscapeGrid {
  std::vector<double> coords;
  /// [i][j] is the point coords[i] * d1 + coords[j] * d2.
  std::vector<std::vector<double>> loss;
  std::vector<std::vector<double>> accuracy;
  double center_loss = 0.0;
  /// Mean |loss - center_loss| over grid points with a^2 + b^2 <= 1.
  double mean_abs_delta_unit_ball = 0.0;
};

/// Two seeded Gaussian directions over every alpha entry, each row rescaled
/// to the norm of the matching alpha row (unit norm where that row is zero).
std::pair<std::vector<double>, std::vector<double>> landscape_directions(const ArchParams& arch, std::uint64_t seed);

/// Evaluates the supernet at alpha + a d1 + b d2 for every (a, b) in
/// coords x coords, with weights frozen. Throws ContractError unless coords
/// is symmetric around zero.
LandscapeGrid landscape_scan(const Network& net, const ArchParams& arch, const Batch& batch,
                             std::span<const double> coords, std::uint64_t seed);

struct DiscrepancyGap {
  EvalMetrics supernet;
  EvalMetrics discrete;
  double loss_gap = 0.0;
  double accuracy_gap = 0.0;
};

/// Supernet versus the derived child network sharing its weights.
DiscrepancyGap discrepancy_gap(const Network& supernet, const ArchParams& arch, const Genotype& genotype,
                               const Batch& batch);

/// Fraction of searchable edges (both cell types) whose argmax, with `none`
/// excluded, is skip_connect.
double skip_fraction(const ArchParams& arch, const CellTopology& topo);

}  // namespace sadarts
