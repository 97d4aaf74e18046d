#pragma once

// Random variate helpers on top of <random>. Gamma draws with small shape are
// produced in log space so Dirichlet vectors with tiny concentrations do not
// collapse to NaN.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace lanescope {

using Rng = std::mt19937_64;

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform01(Rng& rng) {
  // (0, 1): never returns exactly 0, so log(u) is finite.
  double u;
  do {
    u = std::generate_canonical<double, 53>(rng);
  } while (u <= 0.0);
  return u;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// log of a Gamma(shape, 1) draw.
inline double log_gamma_variate(double shape, Rng& rng) {
  if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
  return std::log(g) + std::log(uniform01(rng)) / shape;
}

// Gamma with shape/rate parameterisation.
inline double gamma_variate(double shape, double rate, Rng& rng) {
  return std::exp(log_gamma_variate(shape, rng)) / rate;
}

inline double beta_variate(double a, double b, Rng& rng) {
  double la = log_gamma_variate(a, rng);
  double lb = log_gamma_variate(b, rng);
  double m = std::max(la, lb);
  double ea = std::exp(la - m), eb = std::exp(lb - m);
  return ea / (ea + eb);
}

inline bool bernoulli(double p, Rng& rng) {
  if (p >= 1.0) return true;
  if (p <= 0.0) return false;
  return uniform01(rng) < p;
}

inline std::int64_t binomial(std::int64_t n, double p, Rng& rng) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<std::int64_t>(n, p)(rng);
}

inline double chi_squared(double dof, Rng& rng) { return 2.0 * gamma_variate(0.5 * dof, 1.0, rng); }

// Dirichlet draw normalised in log space; the result sums to one up to
// rounding and never contains NaN.
inline Eigen::VectorXd dirichlet(const Eigen::VectorXd& concentration, Rng& rng) {
  const Eigen::Index n = concentration.size();
  Eigen::VectorXd logs(n);
  for (Eigen::Index i = 0; i < n; ++i) logs[i] = log_gamma_variate(concentration[i], rng);
  double m = logs.maxCoeff();
  Eigen::VectorXd w = (logs.array() - m).exp().matrix();
  return w / w.sum();
}

// Index sampled proportionally to nonnegative weights.
inline std::size_t categorical(const double* weights, std::size_t n, Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weights[i];
  double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Round-off fallthrough: last index with positive weight.
  for (std::size_t i = n; i-- > 0;)
    if (weights[i] > 0.0) return i;
  return n - 1;
}

}  // namespace lanescope
