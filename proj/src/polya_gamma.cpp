#include "treelcm/polya_gamma.hpp"

#include <cmath>
#include <numbers>

namespace treelcm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;

double log_normal_cdf(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

// n-th coefficient of the alternating series for the Jacobi density at x.
double series_term(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(expnt);
}

// Probability of proposing from the exponential tail piece.
double tail_mass(double half_z) {
  const double fz = 0.125 * kPi * kPi + 0.5 * half_z * half_z;
  const double root = std::sqrt(1.0 / kTrunc);
  const double b = root * (kTrunc * half_z - 1.0);
  const double a = -root * (kTrunc * half_z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - half_z + log_normal_cdf(b);
  const double xa = x0 + half_z + log_normal_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse-Gaussian(1/half_z, 1) truncated to (0, kTrunc).
double truncated_inverse_gaussian(double half_z, Rng& rng) {
  double x = kTrunc + 1.0;
  if (1.0 / kTrunc > half_z) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * half_z * half_z * x);
    }
    return x;
  }
  const double mu = 1.0 / half_z;
  while (x > kTrunc) {
    double y = rng.normal();
    y *= y;
    const double half_mu = 0.5 * mu;
    const double mu_y = mu * y;
    x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
    if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
  }
  return x;
}

}  // namespace

double sample_polya_gamma(double z, Rng& rng) {
  const double half_z = 0.5 * std::abs(z);
  const double fz = 0.125 * kPi * kPi + 0.5 * half_z * half_z;
  const double p_tail = tail_mass(half_z);
  for (;;) {
    const double x = rng.uniform() < p_tail ? kTrunc + rng.exponential() / fz : truncated_inverse_gaussian(half_z, rng);
    double s = series_term(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_term(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_term(n, x);
        if (y > s) break;
      }
    }
  }
}

double polya_gamma_mean(double z) {
  if (std::abs(z) < 1e-8) return 0.25;
  return std::tanh(0.5 * z) / (2.0 * z);
}

double polya_gamma_variance(double z) {
  const double a = std::abs(z);
  if (a < 1e-3) return 1.0 / 24.0 - a * a / 120.0;
  const double ch = std::cosh(0.5 * a);
  return (std::sinh(a) - a) / (4.0 * a * a * a * ch * ch);
}

}  // namespace treelcm
