#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stcast/ternary.hpp"

namespace stcast::testing {

// Mix of continuous, integer-valued (ties) and sparse vectors, plus, when
// `wide` is set, entries spread over 2^-20..2^20.
inline std::vector<double> random_weights(std::mt19937_64& rng, std::size_t n, bool wide = true) {
  std::vector<double> w(n);
  const int kind = std::uniform_int_distribution<int>(0, wide ? 3 : 2)(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> small(-3, 3);
  std::bernoulli_distribution zero(0.4);
  for (double& v : w) {
    switch (kind) {
      case 0: v = normal(rng); break;
      case 1: v = static_cast<double>(small(rng)); break;
      case 2: v = zero(rng) ? 0.0 : normal(rng); break;
      default: v = std::ldexp(normal(rng), std::uniform_int_distribution<int>(-20, 20)(rng)); break;
    }
  }
  return w;
}

inline double norm2(const std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += v * v;
  return s;
}

// |objective(closed form) − objective(enumeration)|.
inline double oracle_gap(const std::vector<double>& w) {
  const auto fast = ternary::project(w);
  const auto slow = ternary::project_oracle(w);
  return std::abs(ternary::objective(w, fast) - ternary::objective(w, slow));
}

// Checks idempotence, scale equivariance, k* invariance, the optimality
// certificate against every enumerated candidate, and k* >= 1 for nonzero
// input. Returns an empty string when all hold.
inline std::string projection_violation(const std::vector<double>& w, double c) {
  std::ostringstream why;
  const auto t = ternary::project(w);
  const double scale = std::max(1.0, norm2(w));
  const double tol = 1e-12 * scale;
  const bool nonzero = norm2(w) > 0;

  if (nonzero && t.nonzeros == 0) why << "k*=0 for nonzero input; ";
  if (nonzero && !(t.alpha > 0)) why << "alpha not positive; ";

  // Certificate: ‖w‖² − s_k*²/k* is the objective and a lower bound for all T.
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += t.trits[i] * w[i];
  const double bound = t.nonzeros ? norm2(w) - s * s / static_cast<double>(t.nonzeros) : norm2(w);
  if (std::abs(ternary::objective(w, t) - bound) > tol) why << "objective differs from certificate; ";
  if (w.size() <= 8) {
    const std::size_t n = w.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 3;
    std::vector<std::int8_t> cand(n);
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t r = code;
      double dot = 0;
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i) {
        cand[i] = static_cast<std::int8_t>(static_cast<int>(r % 3) - 1);
        r /= 3;
        dot += cand[i] * w[i];
        k += cand[i] != 0;
      }
      if (!k) continue;
      const double a = std::max(0.0, dot / static_cast<double>(k));
      double obj = 0;
      for (std::size_t i = 0; i < n; ++i) obj += (a * cand[i] - w[i]) * (a * cand[i] - w[i]);
      if (obj < bound - tol) {
        why << "candidate " << code << " beats the certificate; ";
        break;
      }
    }
  }

  if (nonzero) {
    const auto again = ternary::project(t.dense());
    if (again.trits != t.trits || std::abs(again.alpha - t.alpha) > 1e-12 * t.alpha)
      why << "not idempotent; ";
  }

  // Scaling can break an exact score tie in floating point (the prefix sums
  // round differently), so a different k* is accepted only when it attains
  // the same objective.
  std::vector<double> cw(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) cw[i] = c * w[i];
  const auto tc = ternary::project(cw);
  bool equivariant = tc.nonzeros == t.nonzeros;
  for (std::size_t i = 0; equivariant && i < w.size(); ++i)
    equivariant = tc.trits[i] == (c > 0 ? t.trits[i] : -t.trits[i]);
  if (equivariant) {
    if (std::abs(tc.alpha - std::abs(c) * t.alpha) > 1e-12 * std::abs(c) * t.alpha)
      why << "alpha not equivariant; ";
  } else if (std::abs(ternary::objective(cw, tc) - c * c * ternary::objective(w, t)) > c * c * tol) {
    why << "projection not equivariant under scaling by " << c << "; ";
  }
  return why.str();
}

inline double random_scale(std::mt19937_64& rng) {
  const double mag = std::exp(std::uniform_real_distribution<double>(-5.0, 5.0)(rng));
  return std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
}

}  // namespace stcast::testing
