#pragma once

#include <cmath>
#include <numbers>

namespace sadarts {

/// Gauss error function via the Abramowitz-Stegun 7.1.26 rational
/// approximation; absolute error below 1.5e-7 on the whole real line.
template <typename Scalar>
Scalar erf_forward(Scalar x) {
  constexpr Scalar p = Scalar(0.3275911);
  constexpr Scalar a1 = Scalar(0.254829592);
  constexpr Scalar a2 = Scalar(-0.284496736);
  constexpr Scalar a3 = Scalar(1.421413741);
  constexpr Scalar a4 = Scalar(-1.453152027);
  constexpr Scalar a5 = Scalar(1.061405429);

  const Scalar ax = std::abs(x);
  // The polynomial leaves a ~1e-9 residual at the origin.
  if (ax == Scalar(0)) return x;
  const Scalar t = Scalar(1) / (Scalar(1) + p * ax);
  const Scalar poly = ((((a5 * t + a4) * t + a3) * t + a2) * t + a1) * t;
  const Scalar y = Scalar(1) - poly * std::exp(-ax * ax);
  return x < Scalar(0) ? -y : y;
}

/// Exact derivative 2/sqrt(pi) * exp(-x^2); not the derivative of the
/// polynomial used by erf_forward.
template <typename Scalar>
Scalar erf_backward(Scalar x) {
  return Scalar(2) / std::sqrt(std::numbers::pi_v<Scalar>) * std::exp(-x * x);
}

}  // namespace sadarts
