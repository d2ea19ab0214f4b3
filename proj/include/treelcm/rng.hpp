#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace treelcm {

// Portable random stream. The engine is std::mt19937_64 (bit-exact across
// standard libraries); every transform below is implemented here rather than
// delegated to <random> distributions, whose algorithms are unspecified.
//
//   uniform()      (u64 >> 11 + 0.5) * 2^-53, never 0 or 1
//   normal()       Box-Muller, cosine branch, two uniforms per draw
//   exponential()  -log(uniform())
//   gamma(a)       Marsaglia-Tsang; a < 1 via gamma(a + 1) * u^(1/a)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential();
  double gamma(double shape);
  double gamma(double shape, double rate) { return gamma(shape) / rate; }
  double inverse_gamma(double shape, double rate) { return rate / gamma(shape); }
  bool bernoulli(double p) { return uniform() < p; }
  // Inverse-CDF over unnormalized weights, scanned in index order.
  std::size_t categorical(std::span<const double> weights);
  std::size_t uniform_index(std::size_t n);
  std::vector<double> dirichlet(std::span<const double> alpha);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer over (seed, a, b); used to derive independent
// substream seeds, e.g. one per chain.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace treelcm
