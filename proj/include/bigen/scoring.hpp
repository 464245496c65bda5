#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "bigen/mechanism.hpp"

namespace bigen {

/// Scaled complementary error function exp(x^2) * erfc(x) for x >= 0.
///
/// Below the crossover x^2 is split exactly as hi + lo (via fma) so that
/// exp(x^2) keeps full precision; above it the continued fraction
///   erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
/// is evaluated bottom-up, which stays finite for arbitrarily large x.
inline double erfcx(double x) {
  constexpr double crossover = 8.0;
  if (x < crossover) {
    const double hi = x * x;
    const double lo = std::fma(x, x, -hi);
    return std::exp(hi) * std::erfc(x) * (1.0 + lo);
  }
  double t = x;
  for (int k = 200; k >= 1; --k) t = x + (0.5 * k) / t;
  return 1.0 / (std::sqrt(std::numbers::pi) * t);
}

inline double z_value(const MarginalStats& stats, double x) {
  return std::abs(x - stats.mean) / stats.std;
}

/// -log Phi(-z) for z >= 0, computed in the log domain.
inline double tail_score(double z) {
  const double u = z / std::numbers::sqrt2;
  return u * u - std::log(erfcx(u)) + std::numbers::ln2;
}

/// d/dz of tail_score: the inverse Mills ratio phi(z)/Phi(-z).
inline double tail_score_slope(double z) {
  return std::sqrt(2.0 / std::numbers::pi) / erfcx(z / std::numbers::sqrt2);
}

/// Outlier score S(x) = -log Phi(-z) of the z-score against a Gaussian marginal.
/// It differs from the two-sided tail -log P(|X - mu| >= |x - mu|) by log 2.
inline double outlier_score(const MarginalStats& stats, double x) {
  return tail_score(z_value(stats, x));
}

/// dS/dx. At x == mean the subgradient 0 is returned.
inline double outlier_score_derivative(const MarginalStats& stats, double x) {
  const double d = x - stats.mean;
  if (d == 0.0) return 0.0;
  const double sign = d > 0.0 ? 1.0 : -1.0;
  return sign / stats.std * tail_score_slope(std::abs(d) / stats.std);
}

inline double score_of_leaf(const MechanismModel& model, NodeId target, double x) {
  return outlier_score(model.marginal(target), x);
}

}  // namespace bigen
