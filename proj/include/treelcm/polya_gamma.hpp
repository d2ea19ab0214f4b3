#pragma once

#include "treelcm/rng.hpp"

namespace treelcm {

// Exact PG(1, z) draw (Devroye-style alternating-series sampler with the
// exponential / truncated inverse-Gaussian proposal mixture split at 0.64).
double sample_polya_gamma(double z, Rng& rng);

// E[PG(1, z)] = tanh(z/2) / (2z), 1/4 at z = 0.
double polya_gamma_mean(double z);
// Var[PG(1, z)] = (sinh(z) - z) / (4 z^3 cosh^2(z/2)), 1/24 at z = 0.
double polya_gamma_variance(double z);

}  // namespace treelcm
