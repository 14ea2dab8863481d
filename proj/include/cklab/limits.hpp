#pragma once

#include "cklab/pgroup.hpp"

#include <cmath>

namespace cklab {

// prod_{i>=1} (1 - p^{-i-t}), stopped once the geometric tail
// sum_{i>N} p^{-i-t} drops below tol. Since -log(1-x) <= 2x for x <= 1/2
// the relative error is bounded by about 2*tol.
inline double euler_product(std::uint64_t p, int t, double tol) {
  const double q = 1.0 / static_cast<double>(p);
  double term = std::pow(q, t + 1);
  double prod = 1.0;
  for (;;) {
    prod *= 1.0 - term;
    term *= q;
    if (term / (1.0 - q) < tol) break;
  }
  return prod;
}

// Limit probability that the cokernel of an n x (n+t) Haar matrix is G.
inline double cohen_lenstra_prob(const PGroup& g, int t = 0, double tail_tol = 1e-15) {
  if (t < 0) throw ValidationError("cohen_lenstra_prob: t must be nonnegative");
  if (!(tail_tol > 0)) throw ValidationError("cohen_lenstra_prob: tail_tol must be positive");
  const double aut = count_automorphisms(g).convert_to<double>();
  const double order_t = std::pow(g.order().convert_to<double>(), t);
  return euler_product(g.p(), t, tail_tol) / (aut * order_t);
}

// Limit law of the mod-p corank of a square Haar matrix.
inline double nu_p(int m, std::uint64_t p, double tail_tol = 1e-16) {
  if (m < 0) throw ValidationError("nu_p: m must be nonnegative");
  if (!is_prime(p)) throw ValidationError("nu_p: p must be prime");
  const double q = 1.0 / static_cast<double>(p);
  double v = std::pow(q, static_cast<double>(m) * m);
  double qk = 1.0;
  for (int k = 1; k <= m; ++k) {
    qk *= q;
    v /= (1.0 - qk) * (1.0 - qk);
  }
  return v * euler_product(p, 0, tail_tol);
}

}  // namespace cklab
