#pragma once

// Test-only oracles. Nothing here calls into the code paths being checked
// beyond the forward evaluation the caller supplies.

#include "sadarts/random.hpp"
#include "sadarts/tensor.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace sadarts::testing {

/// Central finite differences of a scalar function with respect to every
/// entry of `param`, perturbing its data in place.
inline Array fd_gradient(const std::function<double()>& f, Tensor& param, double step = 1e-5) {
  Array g(param.numel());
  for (Index i = 0; i < param.numel(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + step;
    const double up = f();
    param.data()[i] = saved - step;
    const double down = f();
    param.data()[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// max |a - b| / max(max |b|, floor).
inline double rel_error(const Array& a, const Array& b, double floor = 1e-8) {
  return (a - b).abs().maxCoeff() / std::max(b.abs().maxCoeff(), floor);
}

/// erf by its Maclaurin series, summed until terms drop below 1e-12 of the
/// running total.
inline double erf_series(double x) {
  double term = x;  // x^(2n+1) (-1)^n / n!
  double total = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const double contribution = term / (2 * n + 1);
    total += contribution;
    if (std::abs(contribution) < 1e-12 * std::max(1.0, std::abs(total))) break;
  }
  return 2.0 / std::sqrt(std::numbers::pi) * total;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  Tensor t(shape, requires_grad);
  for (Index i = 0; i < t.numel(); ++i) t.data()[i] = uniform(rng, lo, hi);
  return t;
}

}  // namespace sadarts::testing
