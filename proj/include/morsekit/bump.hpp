#pragma once

#include <cmath>

namespace morsekit {

namespace detail {
// g(u) = exp(-1/u) for u > 0, else 0; the standard smooth transition kernel.
inline double bump_g(double u) { return u > 0 ? std::exp(-1.0 / u) : 0.0; }
inline double bump_g_deriv(double u) { return u > 0 ? std::exp(-1.0 / u) / (u * u) : 0.0; }
}  // namespace detail

// Canonical smooth profile: 1 on (-inf, 1/2], 0 on [1, inf),
// g(1-s) / (g(1-s) + g(s-1/2)) in between.
inline double bump(double s) {
  if (s <= 0.5) return 1.0;
  if (s >= 1.0) return 0.0;
  double a = detail::bump_g(1.0 - s);
  double b = detail::bump_g(s - 0.5);
  return a / (a + b);
}

inline double bump_deriv(double s) {
  if (s <= 0.5 || s >= 1.0) return 0.0;
  double a = detail::bump_g(1.0 - s);
  double b = detail::bump_g(s - 0.5);
  double da = -detail::bump_g_deriv(1.0 - s);
  double db = detail::bump_g_deriv(s - 0.5);
  return (da * b - a * db) / ((a + b) * (a + b));
}

// rho_r(s) = rho(s / r).
inline double bump_scaled(double r, double s) { return bump(s / r); }
inline double bump_scaled_deriv(double r, double s) { return bump_deriv(s / r) / r; }

}  // namespace morsekit
