#pragma once

#include <span>
#include <vector>

#include "treelcm/rng.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

// Exact posterior over one item's node locations: Brownian prior along the
// tree (variance `variance` per unit time, origin pinned at `origin`) times a
// Gaussian evidence term exp(shift * x - precision * x^2 / 2) at each node.
// Upward filtering collects information-form messages; marginals and joint
// draws then follow by downward conditioning.
class TreeGaussianPosterior {
 public:
  // Evidence vectors are indexed by node id.
  TreeGaussianPosterior(const DdtTree& tree, double variance, double origin, std::span<const double> precision,
                        std::span<const double> shift);

  struct Marginals {
    std::vector<double> mean;
    std::vector<double> variance;
  };
  Marginals marginals() const;
  std::vector<double> sample(Rng& rng) const;
  // log of the integral of prior times evidence over all node locations.
  double log_evidence() const { return log_evidence_; }

 private:
  // x_v | x_parent ~ N(gain * x_parent + offset, spread)
  struct Conditional {
    double gain = 0.0;
    double offset = 0.0;
    double spread = 0.0;
  };

  const DdtTree& tree_;
  double origin_;
  std::vector<Conditional> conditional_;
  double log_evidence_ = 0.0;
};

}  // namespace treelcm
