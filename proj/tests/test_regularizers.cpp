#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sadarts/errors.hpp"
#include "sadarts/regularizers.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace sadarts;
using sadarts::testing::fd_gradient;
using sadarts::testing::random_tensor;
using sadarts::testing::rel_error;

namespace {

double table_mean(const Tensor& t) { return t.data().mean(); }

// Loss value and FD-vs-analytic relative error for one table.
double loss_fd_error(const std::function<Tensor(const Tensor&)>& loss, Tensor& alpha) {
  alpha.zero_grad();
  backward(loss(alpha));
  const Array analytic = alpha.grad();
  alpha.zero_grad();
  auto f = [&] {
    NoGradGuard g;
    return loss(alpha).item();
  };
  return rel_error(analytic, fd_gradient(f, alpha));
}

}  // namespace

TEST_CASE("sa collapses to the mean at nu = 1") {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const Tensor a = random_tensor({6, 5}, rng, -3, 3, false);
    const std::vector<Tensor> tables{a};
    for (double mu : {0.0, 0.5, 1e6}) {
      CHECK(std::abs(sa_loss(tables, 2.0, 1.0, mu).item() - 2.0 * table_mean(a)) < 1e-12);
    }
    CHECK(std::abs(sa_loss(tables, 1.5, 0.3, 0.0).item() - 1.5 * 1.3 / 2.0 * table_mean(a)) < 1e-12);
  }
}

TEST_CASE("sa per-table normalization sums over tables") {
  Rng rng(2);
  const Tensor a = random_tensor({14, 8}, rng, -1, 1, false);
  const Tensor b = random_tensor({14, 8}, rng, -1, 1, false);
  const std::vector<Tensor> both{a, b};
  CHECK(std::abs(sa_loss(both, 1.0, 1.0, 0.0).item() - (table_mean(a) + table_mean(b))) < 1e-12);
}

TEST_CASE("sa approaches leaky relu for large mu") {
  for (double a = 1e-4; a <= 10.0; a *= 1.1) {
    CHECK(std::abs(sa_value(a, 0.25, 1e6) - a) < 1e-6);
    CHECK(std::abs(sa_value(-a, 0.25, 1e6) - (-0.25 * a)) < 1e-6);
  }
}

TEST_CASE("sa per-entry function is monotone above the slope threshold") {
  // slope = (1 + nu)/2 + (1 - nu)/2 * g(z), g(z) = erf(z) + z erf'(z), whose
  // minimum is g(-1) = -erf(1) - 2/(sqrt(pi) e); monotone iff nu >= nu_star.
  const double g_min = -std::erf(1.0) - 2.0 / (std::sqrt(std::numbers::pi) * std::numbers::e);
  const double nu_star = (-g_min - 1.0) / (1.0 - g_min);
  CHECK(std::abs(nu_star - 0.11418519963359056) < 1e-12);
  for (double nu : {0.0, 0.05, 0.12, 0.25, 0.5, 1.0}) {
    for (double mu : {0.0, 0.7071067811865476, 1.0, 1e6}) {
      CAPTURE(nu);
      CAPTURE(mu);
      if (nu >= nu_star || mu == 0.0) {
        double prev = -1e300;
        for (double a = -10.0; a <= 10.0; a += 0.01) {
          const double v = sa_value(a, nu, mu);
          CHECK(v >= prev);
          prev = v;
        }
      } else if (mu < 10.0) {
        double lowest = 1e300;
        for (double a = -10.0; a <= 10.0; a += 1e-4) lowest = std::min(lowest, sa_slope(a, nu, mu));
        CHECK(std::abs(lowest - ((1.0 + nu) / 2.0 + (1.0 - nu) / 2.0 * g_min)) < 1e-6);
        CHECK(lowest < 0.0);
      }
      if (nu < 1.0 && mu > 0.0) CHECK(sa_slope(-10.0, nu, mu) < sa_slope(10.0, nu, mu));
    }
  }
}

TEST_CASE("sa is translation covariant in its linear regime") {
  Rng rng(3);
  const Tensor a = random_tensor({4, 3}, rng, -2, 2, false);
  const Tensor shifted({4, 3}, a.data() + 0.7);
  const std::vector<Tensor> t0{a}, t1{shifted};
  CHECK(std::abs(sa_loss(t1, 1.2, 1.0, 5.0).item() - sa_loss(t0, 1.2, 1.0, 5.0).item() - 1.2 * 0.7) < 1e-12);
}

TEST_CASE("lse examples and smooth-max bounds") {
  {
    const std::vector<Tensor> t{Tensor({1, 5})};
    CHECK(std::abs(lse_loss(t, 1.0).item() - std::log(5.0)) < 1e-15);
  }
  {
    const std::vector<Tensor> t{Tensor({1, 3}, Array::Map(std::vector<double>{10, 0, 0}.data(), 3))};
    const double v = lse_loss(t, 1.0).item();
    CHECK(v >= 10.0);
    CHECK(v <= 10.0 + std::log(3.0));
  }
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Tensor row = random_tensor({1, 6}, rng, -20, 20, false);
    const std::vector<Tensor> t{row};
    const double v = lse_loss(t, 1.0).item();
    const double mx = row.data().maxCoeff();
    CHECK(v >= mx - 1e-12);
    CHECK(v <= mx + std::log(6.0) + 1e-12);
  }
}

TEST_CASE("lse gradient is the row softmax") {
  Rng rng(5);
  Tensor a = random_tensor({3, 4}, rng, -2, 2);
  const std::vector<Tensor> t{a};
  backward(lse_loss(t, 1.0));
  const Eigen::MatrixXd beta = beta_table(a);
  for (Index r = 0; r < 3; ++r) {
    for (Index c = 0; c < 4; ++c) CHECK(std::abs(a.grad()[r * 4 + c] - beta(r, c)) < 1e-14);
  }
}

TEST_CASE("l2 examples") {
  const std::vector<Tensor> zero{Tensor({2, 2})};
  CHECK(l2_loss(zero, 3.0).item() == 0.0);
  const std::vector<Tensor> t{Tensor::vector({1, -1}, true)};
  CHECK(l2_loss(t, 0.5).item() == 1.0);
  backward(l2_loss(t, 0.5));
  CHECK(t[0].grad()[0] == 1.0);
  CHECK(t[0].grad()[1] == -1.0);
}

TEST_CASE("flops loss examples") {
  const std::vector<double> c3{9, 1, 0};
  CHECK(flops_loss(Tensor({1, 3}, Array::Map(std::vector<double>{0, 0, 1}.data(), 3)), c3).item() == 0.0);
  CHECK(std::abs(flops_loss(Tensor::filled({2, 3}, 1.0 / 3.0), c3).item() - 2.0 * (10.0 / 3.0) / 10.0) < 1e-15);
  const std::vector<double> c2{9, 1};
  CHECK(std::abs(flops_loss(Tensor({1, 2}, Array::Map(std::vector<double>{0.7, 0.3}.data(), 2)), c2).item() - 0.66) <
        1e-15);
  const std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(flops_loss(Tensor({1, 2}), zero), ContractError);
}

TEST_CASE("flops loss per site stays in the unit interval") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Tensor a = random_tensor({1, 5}, rng, -5, 5, false);
    std::vector<double> c(5);
    for (double& v : c) v = uniform(rng, 0, 100);
    const double v = flops_loss(softmax(a, 1), c).item();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("lambda schedule") {
  LambdaSchedule s;
  CHECK(s.at(0) == 0.0);
  CHECK(s.at(10) == 2.0);
  s.divisor = 2.0;
  CHECK(s.at(10) == 5.0);
  s.zero_before = 15;
  CHECK(s.at(10) == 0.0);
  CHECK(s.at(16) == 8.0);
  s.divisor = 0.0;
  CHECK_THROWS_AS(s.at(3), ContractError);
  CHECK_THROWS_AS(LambdaSchedule{}.at(-1), ContractError);
  LambdaSchedule c{LambdaSchedule::Kind::constant, 5.0, 0.25, 0};
  CHECK(c.at(0) == 0.25);
  CHECK(c.at(40) == 0.25);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(7);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int t = 0; t < 50; ++t) {
    Tensor a = random_tensor({4, 5}, rng, -3, 3);
    CHECK(loss_fd_error([](const Tensor& x) { return l2_loss(std::vector<Tensor>{x}, 0.7); }, a) < 1e-6);
    CHECK(loss_fd_error([](const Tensor& x) { return lse_loss(std::vector<Tensor>{x}, 1.3); }, a) < 1e-4);
    CHECK(loss_fd_error([](const Tensor& x) { return sa_loss(std::vector<Tensor>{x}, 2.0, 1.0, 3.0); }, a) < 1e-4);
    CHECK(loss_fd_error([&](const Tensor& x) { return sa_loss(std::vector<Tensor>{x}, 2.0, 0.0, inv_sqrt2); }, a) <
          1e-4);
    const std::vector<double> costs{0, 3, 9, 1, 0.5};
    CHECK(loss_fd_error([&](const Tensor& x) { return flops_loss(softmax(x, 1), costs); }, a) < 1e-4);

    // keep entries away from the kink, where the large-mu curve is not smooth
    // at the finite-difference step
    for (Index i = 0; i < a.numel(); ++i) {
      if (std::abs(a.data()[i]) < 1e-3) a.data()[i] = a.data()[i] < 0 ? -1e-3 : 1e-3;
    }
    CHECK(loss_fd_error([](const Tensor& x) { return sa_loss(std::vector<Tensor>{x}, 2.0, 0.25, 1e6); }, a) < 1e-4);
  }
}
