#pragma once

#include "sadarts/erf.hpp"
#include "sadarts/mixed_ops.hpp"

#include <span>
#include <string>
#include <vector>

namespace sadarts {

/// Smooth activation of one architecture weight:
///   ((1 + nu) a + (1 - nu) a erf(mu (1 - nu) a)) / 2.
/// Tends to max(a, nu a) as mu grows and to (1 + nu) a / 2 at mu = 0.
template <typename Scalar>
Scalar sa_value(Scalar a, Scalar nu, Scalar mu) {
  const Scalar k = mu * (Scalar(1) - nu);
  return ((Scalar(1) + nu) * a + (Scalar(1) - nu) * a * erf_forward(k * a)) / Scalar(2);
}

/// d sa_value / d a using the exact erf derivative.
template <typename Scalar>
Scalar sa_slope(Scalar a, Scalar nu, Scalar mu) {
  const Scalar k = mu * (Scalar(1) - nu);
  return ((Scalar(1) + nu) + (Scalar(1) - nu) * (erf_forward(k * a) + k * a * erf_backward(k * a))) / Scalar(2);
}

/// lambda_e times the mean smooth activation of each table, summed over
/// tables.
Tensor sa_loss(std::span<const Tensor> alphas, double lambda_e, double nu, double mu);

/// lambda times the per-row log-sum-exp, summed over rows and tables.
Tensor lse_loss(std::span<const Tensor> alphas, double lambda);

/// lambda times the sum of squares of every entry.
Tensor l2_loss(std::span<const Tensor> alphas, double lambda);

/// sum over rows of (beta_row . costs) / sum(costs), where beta is a
/// [sites x ops] table of mixture weights. Throws ContractError when all
/// costs are zero or any is negative.
Tensor flops_loss(const Tensor& beta, std::span<const double> costs);

struct LambdaSchedule {
  enum class Kind { linear, constant };
  Kind kind = Kind::linear;
  /// linear: lambda = epoch / divisor.
  double divisor = 5.0;
  /// constant: lambda = value.
  double value = 0.0;
  /// lambda is 0 for epochs below this.
  int zero_before = 0;

  double at(int epoch) const;
};

struct RegularizerSpec {
  enum class Kind { none, l2, lse, sa };
  Kind kind = Kind::none;
  LambdaSchedule schedule;
  double nu = 0.0;
  double mu = 0.7071067811865476;
  double flops_weight = 0.0;
  std::vector<double> costs;
};

std::string regularizer_name(RegularizerSpec::Kind kind);
RegularizerSpec::Kind regularizer_kind(const std::string& name);

/// Auxiliary architecture loss for one epoch; undefined when it is
/// identically zero.
Tensor regularizer_loss(const RegularizerSpec& spec, const ArchParams& arch, int epoch);

}  // namespace sadarts
