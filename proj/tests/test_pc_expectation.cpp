#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sadarts/pc_expectation.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace sadarts;

namespace {

// Expectation over all 2^N masks, weighted by their probabilities.
LinearUnitGradients exhaustive_expectation(const LinearUnitModel& m) {
  const Index n = m.x.size();
  LinearUnitGradients acc{Eigen::MatrixXd::Zero(m.w.rows(), n), Eigen::VectorXd::Zero(m.w.rows()),
                          Eigen::VectorXd::Zero(m.w.rows())};
  Eigen::VectorXd mask(n);
  for (long code = 0; code < (1L << n); ++code) {
    double prob = 1.0;
    for (Index i = 0; i < n; ++i) {
      mask[i] = (code >> i) & 1;
      prob *= mask[i] ? m.p[i] : 1.0 - m.p[i];
    }
    const LinearUnitGradients g = masked_gradients(m, mask);
    acc.dw += prob * g.dw;
    acc.dbeta += prob * g.dbeta;
    acc.dalpha += prob * g.dalpha;
  }
  return acc;
}

}  // namespace

TEST_CASE("closed-form expectation equals the exhaustive mask average") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LinearUnitModel m = random_linear_unit(3, 4, seed);
    const LinearUnitGradients want = exhaustive_expectation(m);
    const LinearUnitGradients got = expected_gradients(m);
    CHECK((got.dw - want.dw).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got.dbeta - want.dbeta).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got.dalpha - want.dalpha).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("variance term vanishes for deterministic masks") {
  LinearUnitModel m = random_linear_unit(3, 4, 1);
  m.p.setOnes();
  const LinearUnitGradients e = expected_gradients(m), ens = ensemble_gradients(m);
  CHECK((e.dw - ens.dw).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.dalpha - ens.dalpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("alpha gradient is the beta gradient through the softmax") {
  const LinearUnitModel m = random_linear_unit(3, 4, 2);
  Eigen::VectorXd mask(4);
  mask << 1, 0, 1, 1;
  const LinearUnitGradients g = masked_gradients(m, mask);
  auto energy = [&](const Eigen::VectorXd& alpha) {
    LinearUnitModel q = m;
    q.alpha = alpha;
    const double r = q.t - q.beta().dot(q.w * mask.cwiseProduct(q.x));
    return 0.5 * r * r;
  };
  for (Index l = 0; l < 3; ++l) {
    Eigen::VectorXd up = m.alpha, down = m.alpha;
    up[l] += 1e-6;
    down[l] -= 1e-6;
    CHECK(std::abs((energy(up) - energy(down)) / 2e-6 - g.dalpha[l]) < 1e-8);
  }
}

TEST_CASE("monte carlo mean matches the closed form within three standard errors") {
  const LinearUnitModel m = random_linear_unit(3, 4, 7);
  const MonteCarloGradients mc = monte_carlo_gradients(m, 100000, 11);
  const LinearUnitGradients e = expected_gradients(m);
  for (Index l = 0; l < 3; ++l) {
    for (Index n = 0; n < 4; ++n) {
      CHECK(std::abs(mc.mean.dw(l, n) - e.dw(l, n)) <= 3.0 * mc.std_error.dw(l, n));
    }
    CHECK(std::abs(mc.mean.dbeta[l] - e.dbeta[l]) <= 3.0 * mc.std_error.dbeta[l]);
    CHECK(std::abs(mc.mean.dalpha[l] - e.dalpha[l]) <= 3.0 * mc.std_error.dalpha[l]);
  }
}
