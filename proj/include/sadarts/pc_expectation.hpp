#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace sadarts {

/// Linear unit over L candidates and N input channels with Bernoulli
/// channel masks s_n ~ B(p_n):
///   E = 1/2 (t - sum_l sum_n beta_l w_{l,n} s_n x_n)^2,  beta = softmax(alpha).
/// The ensemble model replaces every s_n by p_n.
struct LinearUnitModel {
  Eigen::MatrixXd w;      // L x N
  Eigen::VectorXd alpha;  // L
  Eigen::VectorXd p;      // N, keep probabilities
  Eigen::VectorXd x;      // N
  double t = 0.0;

  Eigen::VectorXd beta() const;
};

/// Random model; p is drawn inside [0.1, 0.9].
LinearUnitModel random_linear_unit(int candidates, int channels, std::uint64_t seed);

struct LinearUnitGradients {
  Eigen::MatrixXd dw;
  Eigen::VectorXd dbeta;
  Eigen::VectorXd dalpha;
};

/// Gradients of E for one mask.
LinearUnitGradients masked_gradients(const LinearUnitModel& m, const Eigen::VectorXd& mask);

/// Gradients of the ensemble error (mask replaced by p).
LinearUnitGradients ensemble_gradients(const LinearUnitModel& m);

/// Closed-form expectation over masks: the ensemble gradient plus the
/// mask-variance term. `dbeta` carries the variance term
///   sum_z sum_n beta_z w_{z,n} w_{l,n} p_n (1 - p_n) x_n^2
/// and `dalpha` that term pushed through the softmax Jacobian.
LinearUnitGradients expected_gradients(const LinearUnitModel& m);

struct MonteCarloGradients {
  LinearUnitGradients mean;
  LinearUnitGradients std_error;
  long samples = 0;
};

MonteCarloGradients monte_carlo_gradients(const LinearUnitModel& m, long samples, std::uint64_t seed);

}  // namespace sadarts
