#include "treelcm/gaussian_tree.hpp"

#include <cmath>

#include "treelcm/error.hpp"

namespace treelcm {

TreeGaussianPosterior::TreeGaussianPosterior(const DdtTree& tree, double variance, double origin,
                                             std::span<const double> precision, std::span<const double> shift)
    : tree_(tree), origin_(origin), conditional_(tree.size()) {
  const int n = tree.size();
  if (static_cast<int>(precision.size()) != n || static_cast<int>(shift.size()) != n)
    throw Error("dimension_mismatch", "evidence must be given for every node");
  if (!(variance > 0.0)) throw Error("invalid_argument", "variance must be positive");

  std::vector<double> below_precision(precision.begin(), precision.end());
  std::vector<double> below_shift(shift.begin(), shift.end());
  for (int v : tree.postorder()) {
    const double length = tree.branch_length(v);
    Conditional& cond = conditional_[v];
    if (length > 0.0) {
      const double s = variance * length;
      const double prec = 1.0 / s + below_precision[v];
      cond = {1.0 / (s * prec), below_shift[v] / prec, 1.0 / prec};
      const int p = tree.parent(v);
      if (p >= 0) {
        // Integrating x_v out of N(x_v; x_p, s) * evidence-below(x_v).
        const double damp = 1.0 + s * below_precision[v];
        below_precision[p] += below_precision[v] / damp;
        below_shift[p] += below_shift[v] / damp;
        log_evidence_ += -0.5 * std::log(damp) + 0.5 * below_shift[v] * below_shift[v] * s / damp;
      }
    } else {
      cond = {1.0, 0.0, 0.0};  // pinned to the origin by a zero-length root edge
    }
  }
  // Remaining message at the root, integrated against its edge from the origin.
  const int r = tree.root();
  const double s = variance * tree.branch_length(r);
  const double damp = 1.0 + s * below_precision[r];
  log_evidence_ += -0.5 * std::log(damp) + (0.5 * below_shift[r] * below_shift[r] * s + below_shift[r] * origin -
                                            0.5 * below_precision[r] * origin * origin) /
                                               damp;
}

TreeGaussianPosterior::Marginals TreeGaussianPosterior::marginals() const {
  Marginals out{std::vector<double>(tree_.size()), std::vector<double>(tree_.size())};
  for (int v : tree_.preorder()) {
    const int p = tree_.parent(v);
    const double parent_mean = p < 0 ? origin_ : out.mean[p];
    const double parent_var = p < 0 ? 0.0 : out.variance[p];
    const Conditional& c = conditional_[v];
    out.mean[v] = c.gain * parent_mean + c.offset;
    out.variance[v] = c.gain * c.gain * parent_var + c.spread;
  }
  return out;
}

std::vector<double> TreeGaussianPosterior::sample(Rng& rng) const {
  std::vector<double> x(tree_.size());
  for (int v : tree_.preorder()) {
    const int p = tree_.parent(v);
    const Conditional& c = conditional_[v];
    const double mean = c.gain * (p < 0 ? origin_ : x[p]) + c.offset;
    x[v] = c.spread > 0.0 ? mean + std::sqrt(c.spread) * rng.normal() : mean;
  }
  return x;
}

}  // namespace treelcm
