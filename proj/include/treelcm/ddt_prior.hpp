#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "treelcm/rng.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

// Divergence times are kept inside [kTimeFloor, 1 - kTimeFloor] by samplers.
inline constexpr double kTimeFloor = 1e-10;
double clamp_time(double t);

// a(t) = c / (1 - t), A(t) = -c log(1 - t).
struct DivergenceFunction {
  explicit DivergenceFunction(double c);

  double rate(double t) const;
  double cumulative(double t) const;

  double c;
};

// Partition of J items into G groups, each with its own diffusion variance.
class ItemGrouping {
 public:
  ItemGrouping() = default;
  // 0-based group index per item; groups must be 0..G-1, each nonempty.
  explicit ItemGrouping(std::vector<int> group_of_item);
  // 0-based item index sets; must be disjoint, nonempty and cover 0..J-1.
  static ItemGrouping from_sets(const std::vector<std::vector<int>>& sets, int item_count);

  int item_count() const { return static_cast<int>(group_of_item_.size()); }
  int group_count() const { return static_cast<int>(sets_.size()); }
  int group(int item) const { return group_of_item_[item]; }
  const std::vector<int>& items(int g) const { return sets_[g]; }
  const std::vector<std::vector<int>>& sets() const { return sets_; }
  const std::vector<int>& group_of_item() const { return group_of_item_; }

 private:
  std::vector<int> group_of_item_;
  std::vector<std::vector<int>> sets_;
};

// One variance per group.
using DiffusionVariances = Eigen::VectorXd;
void check_variances(const DiffusionVariances& variances, const ItemGrouping& grouping);

// Row v holds the J-vector at tree node v; `origin` is the pinned location at
// t = 0 from which the root edge diffuses.
struct NodeLocations {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd origin;
};

// Sequential DDT construction: path i follows the earlier paths, diverging
// with hazard a(t)/m on an edge already traversed by m paths and choosing
// branches in proportion to those counts. Leaves are labeled "v1".."vK" in
// insertion order.
DdtTree sample_ddt_tree(int leaf_count, const DivergenceFunction& divergence, Rng& rng);
DdtTree sample_ddt_tree(int leaf_count, const DivergenceFunction& divergence, std::uint64_t seed);

// Log density of tree shape and times under the DDT prior (labeled leaves).
double log_tree_density(const DdtTree& tree, const DivergenceFunction& divergence);

// The tree density is c^divergences * exp(-c * exposure) * (terms free of c),
// with exposure = sum over internal nodes v of H(m_v - 1) * log((1 - t_u)/(1 - t_v)).
struct DivergenceStatistics {
  int divergences = 0;
  double exposure = 0.0;
};
DivergenceStatistics divergence_statistics(const DdtTree& tree);

// Independent Brownian motion per item along the tree, variance
// sigma2[group(j)] per unit time.
NodeLocations diffuse_locations(const DdtTree& tree, const ItemGrouping& grouping,
                                const DiffusionVariances& variances, const Eigen::VectorXd& root_location,
                                Rng& rng);
NodeLocations diffuse_locations(const DdtTree& tree, const ItemGrouping& grouping,
                                const DiffusionVariances& variances, const Eigen::VectorXd& root_location,
                                std::uint64_t seed);

// Sum of Gaussian increment log densities over edges and items. A zero-length
// root edge pins the root to the origin (contributing 0, or -inf if violated).
double log_locations_density(const DdtTree& tree, const NodeLocations& locations, const ItemGrouping& grouping,
                             const DiffusionVariances& variances);
// Gradient with respect to every node location (the origin is fixed).
Eigen::MatrixXd log_locations_density_gradient(const DdtTree& tree, const NodeLocations& locations,
                                               const ItemGrouping& grouping, const DiffusionVariances& variances);

// Per group, the K x K leaf covariance sigma2_g * path_shared_length in class
// order.
std::vector<Eigen::MatrixXd> leaf_covariance(const DdtTree& tree, const ItemGrouping& grouping,
                                             const DiffusionVariances& variances);

double harmonic_number(int n);

}  // namespace treelcm
