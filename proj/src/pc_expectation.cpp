#include "sadarts/pc_expectation.hpp"

#include "sadarts/errors.hpp"
#include "sadarts/mixed_ops.hpp"
#include "sadarts/random.hpp"

#include <cmath>

namespace sadarts {

namespace {

// dE/dalpha from dE/dbeta through the softmax Jacobian.
Eigen::VectorXd through_softmax(const Eigen::VectorXd& beta, const Eigen::VectorXd& dbeta) {
  return (beta.array() * (dbeta.array() - beta.dot(dbeta))).matrix();
}

LinearUnitGradients gradients_at(const LinearUnitModel& m, const Eigen::VectorXd& s) {
  const Eigen::VectorXd beta = m.beta();
  const Eigen::VectorXd sx = s.cwiseProduct(m.x);
  const double residual = m.t - beta.dot(m.w * sx);
  LinearUnitGradients g;
  g.dw = -residual * beta * sx.transpose();
  g.dbeta = -residual * (m.w * sx);
  g.dalpha = through_softmax(beta, g.dbeta);
  return g;
}

}  // namespace

Eigen::VectorXd LinearUnitModel::beta() const { return beta_of(alpha); }

LinearUnitModel random_linear_unit(int candidates, int channels, std::uint64_t seed) {
  if (candidates < 1 || channels < 1) throw ContractError("random_linear_unit: sizes must be positive");
  Rng rng(seed);
  LinearUnitModel m;
  m.w.resize(candidates, channels);
  for (Index i = 0; i < m.w.size(); ++i) m.w.data()[i] = standard_normal(rng);
  m.alpha.resize(candidates);
  for (Index i = 0; i < candidates; ++i) m.alpha[i] = standard_normal(rng);
  m.p.resize(channels);
  m.x.resize(channels);
  for (Index n = 0; n < channels; ++n) {
    m.p[n] = uniform(rng, 0.1, 0.9);
    m.x[n] = standard_normal(rng);
  }
  m.t = standard_normal(rng);
  return m;
}

LinearUnitGradients masked_gradients(const LinearUnitModel& m, const Eigen::VectorXd& mask) {
  if (mask.size() != m.x.size()) throw DimensionError("masked_gradients: mask length does not match the channels");
  return gradients_at(m, mask);
}

LinearUnitGradients ensemble_gradients(const LinearUnitModel& m) { return gradients_at(m, m.p); }

LinearUnitGradients expected_gradients(const LinearUnitModel& m) {
  const Eigen::VectorXd beta = m.beta();
  const Eigen::ArrayXd var_x2 = m.p.array() * (1.0 - m.p.array()) * m.x.array().square();
  // mixed[n] = sum_z beta_z w_{z,n}
  const Eigen::ArrayXd mixed = (m.w.transpose() * beta).array();
  LinearUnitGradients g = ensemble_gradients(m);
  g.dw += beta * (mixed * var_x2).matrix().transpose();
  g.dbeta += m.w * (mixed * var_x2).matrix();
  g.dalpha = through_softmax(beta, g.dbeta);
  return g;
}

MonteCarloGradients monte_carlo_gradients(const LinearUnitModel& m, long samples, std::uint64_t seed) {
  if (samples < 2) throw ContractError("monte_carlo_gradients: need at least two samples");
  Rng rng(seed);
  const Index L = m.w.rows(), N = m.w.cols();
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(L, N), sw2 = sw;
  Eigen::VectorXd sb = Eigen::VectorXd::Zero(L), sb2 = sb, sa = sb, sa2 = sb;
  Eigen::VectorXd mask(N);
  for (long i = 0; i < samples; ++i) {
    for (Index n = 0; n < N; ++n) mask[n] = uniform01(rng) < m.p[n] ? 1.0 : 0.0;
    const LinearUnitGradients g = gradients_at(m, mask);
    sw += g.dw;
    sw2 += g.dw.cwiseAbs2();
    sb += g.dbeta;
    sb2 += g.dbeta.cwiseAbs2();
    sa += g.dalpha;
    sa2 += g.dalpha.cwiseAbs2();
  }
  const double n = double(samples);
  auto stderr_of = [n](const auto& s, const auto& s2) {
    const auto mean = (s / n).eval();
    return ((s2 / n - mean.cwiseAbs2()).cwiseMax(0.0) * (n / (n - 1.0)) / n).cwiseSqrt().eval();
  };
  MonteCarloGradients out;
  out.samples = samples;
  out.mean = {sw / n, sb / n, sa / n};
  out.std_error = {stderr_of(sw, sw2), stderr_of(sb, sb2), stderr_of(sa, sa2)};
  return out;
}

}  // namespace sadarts
