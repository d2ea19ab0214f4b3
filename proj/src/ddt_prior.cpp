#include "treelcm/ddt_prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "treelcm/error.hpp"

namespace treelcm {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

void check_dimensions(const DdtTree& tree, const NodeLocations& locations, const ItemGrouping& grouping) {
  if (locations.nodes.rows() != tree.size())
    throw Error("dimension_mismatch", "location rows do not match tree nodes");
  if (locations.nodes.cols() != grouping.item_count() || locations.origin.size() != grouping.item_count())
    throw Error("dimension_mismatch", "location columns do not match item count");
}

}  // namespace

double clamp_time(double t) { return std::clamp(t, kTimeFloor, 1.0 - kTimeFloor); }

DivergenceFunction::DivergenceFunction(double c_value) : c(c_value) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("invalid_argument", "divergence parameter c must be positive");
}

double DivergenceFunction::rate(double t) const { return c / (1.0 - t); }

double DivergenceFunction::cumulative(double t) const { return -c * std::log1p(-t); }

ItemGrouping::ItemGrouping(std::vector<int> group_of_item) : group_of_item_(std::move(group_of_item)) {
  if (group_of_item_.empty()) throw Error("invalid_argument", "grouping has no items");
  int groups = 0;
  for (int g : group_of_item_) {
    if (g < 0) throw Error("invalid_argument", "negative group index");
    groups = std::max(groups, g + 1);
  }
  sets_.assign(groups, {});
  for (int j = 0; j < item_count(); ++j) sets_[group_of_item_[j]].push_back(j);
  for (int g = 0; g < groups; ++g)
    if (sets_[g].empty()) throw Error("invalid_argument", "group " + std::to_string(g + 1) + " is empty");
}

ItemGrouping ItemGrouping::from_sets(const std::vector<std::vector<int>>& sets, int item_count) {
  std::vector<int> owner(item_count, -1);
  for (std::size_t g = 0; g < sets.size(); ++g) {
    if (sets[g].empty()) throw Error("invalid_argument", "group " + std::to_string(g + 1) + " is empty");
    for (int j : sets[g]) {
      if (j < 0 || j >= item_count)
        throw Error("invalid_argument", "item index " + std::to_string(j + 1) + " out of range");
      if (owner[j] >= 0)
        throw Error("invalid_argument", "item " + std::to_string(j + 1) + " belongs to two groups");
      owner[j] = static_cast<int>(g);
    }
  }
  for (int j = 0; j < item_count; ++j)
    if (owner[j] < 0) throw Error("invalid_argument", "item " + std::to_string(j + 1) + " belongs to no group");
  return ItemGrouping(std::move(owner));
}

void check_variances(const DiffusionVariances& variances, const ItemGrouping& grouping) {
  if (variances.size() != grouping.group_count())
    throw Error("dimension_mismatch", "one diffusion variance per group is required");
  for (double v : variances)
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("invalid_argument", "diffusion variances must be positive");
}

double harmonic_number(int n) {
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / i;
  return h;
}

DdtTree sample_ddt_tree(int leaf_count, const DivergenceFunction& divergence, Rng& rng) {
  if (leaf_count < 2) throw Error("invalid_argument", "a DDT tree needs at least 2 leaves");

  std::vector<TreeNode> nodes;
  std::vector<int> paths;  // leaves below each node
  nodes.push_back(TreeNode{-1, {-1, -1}, 1.0, "v1"});
  paths.push_back(1);
  int root = 0;

  for (int i = 2; i <= leaf_count; ++i) {
    int v = root;
    double start = 0.0;
    for (;;) {
      const double m = paths[v];
      // Survival exp(-(A(t) - A(start)) / m) inverted at an Exp(1) draw.
      double t = 1.0 - (1.0 - start) * std::exp(-m * rng.exponential() / divergence.c);
      // The hazard diverges at t = 1, so a path always leaves before a leaf;
      // t rounds to 1 only when c is tiny. Nothing fits below a node already
      // at the clamp ceiling, so the path diverges above it.
      if (t < nodes[v].time || nodes[v].is_leaf() || nodes[v].time >= 1.0 - kTimeFloor) {
        t = clamp_time(t);
        if (t >= nodes[v].time) {
          // Just above v in remaining time 1 - t: twice v's, or the geometric
          // mean of the edge ends when the edge is shorter than that.
          const double below = 1.0 - nodes[v].time;
          t = 1.0 - std::min(2.0 * below, std::sqrt(below * (1.0 - start)));
        }
        if (t <= start) t = std::nextafter(start, 1.0);
        if (!(t > start && t < nodes[v].time))
          throw Error("numerical", "no representable divergence time between two clamped nodes");

        const int leaf = static_cast<int>(nodes.size());
        nodes.push_back(TreeNode{-1, {-1, -1}, 1.0, "v" + std::to_string(i)});
        paths.push_back(1);
        const int joint = static_cast<int>(nodes.size());
        const int above = nodes[v].parent;
        nodes.push_back(TreeNode{above, {v, leaf}, t, {}});
        paths.push_back(paths[v]);
        nodes[v].parent = joint;
        nodes[leaf].parent = joint;
        if (above < 0) {
          root = joint;
        } else {
          auto& ch = nodes[above].children;
          (ch[0] == v ? ch[0] : ch[1]) = joint;
        }
        for (int u = joint; u >= 0; u = nodes[u].parent) ++paths[u];
        break;
      }
      start = nodes[v].time;
      const auto& ch = nodes[v].children;
      v = (rng.uniform() * m < paths[ch[0]]) ? ch[0] : ch[1];
    }
  }
  return DdtTree(std::move(nodes), root);
}

DdtTree sample_ddt_tree(int leaf_count, const DivergenceFunction& divergence, std::uint64_t seed) {
  Rng rng(seed);
  return sample_ddt_tree(leaf_count, divergence, rng);
}

DivergenceStatistics divergence_statistics(const DdtTree& tree) {
  const auto counts = tree.leaf_counts();
  DivergenceStatistics stats;
  for (int v : tree.internal_nodes()) {
    const int p = tree.parent(v);
    const double t_above = p < 0 ? 0.0 : tree.time(p);
    ++stats.divergences;
    stats.exposure += harmonic_number(counts[v] - 1) * (std::log1p(-t_above) - std::log1p(-tree.time(v)));
  }
  return stats;
}

double log_tree_density(const DdtTree& tree, const DivergenceFunction& divergence) {
  const auto counts = tree.leaf_counts();
  const double log_c = std::log(divergence.c);
  double total = 0.0;
  for (int v : tree.internal_nodes()) {
    const double t = tree.time(v);
    if (!(t < 1.0)) throw Error("invalid_tree", "internal divergence at time 1 has zero density");
    const int p = tree.parent(v);
    const double t_above = p < 0 ? 0.0 : tree.time(p);
    const auto& ch = tree.node(v).children;
    const int m = counts[v];
    const int l = counts[ch[0]];
    const int r = counts[ch[1]];
    total += log_c - std::log1p(-t);
    total -= divergence.c * harmonic_number(m - 1) * (std::log1p(-t_above) - std::log1p(-t));
    total += std::lgamma(l) + std::lgamma(r) - std::lgamma(m);
  }
  return total;
}

NodeLocations diffuse_locations(const DdtTree& tree, const ItemGrouping& grouping,
                                const DiffusionVariances& variances, const Eigen::VectorXd& root_location,
                                Rng& rng) {
  check_variances(variances, grouping);
  const int items = grouping.item_count();
  if (root_location.size() != items) throw Error("dimension_mismatch", "root location length differs from J");

  NodeLocations out{Eigen::MatrixXd::Zero(tree.size(), items), root_location};
  for (int v : tree.preorder()) {
    const int p = tree.parent(v);
    const double length = tree.branch_length(v);
    for (int j = 0; j < items; ++j) {
      const double from = p < 0 ? root_location[j] : out.nodes(p, j);
      const double sd = std::sqrt(variances[grouping.group(j)] * length);
      out.nodes(v, j) = length > 0.0 ? from + sd * rng.normal() : from;
    }
  }
  return out;
}

NodeLocations diffuse_locations(const DdtTree& tree, const ItemGrouping& grouping,
                                const DiffusionVariances& variances, const Eigen::VectorXd& root_location,
                                std::uint64_t seed) {
  Rng rng(seed);
  return diffuse_locations(tree, grouping, variances, root_location, rng);
}

double log_locations_density(const DdtTree& tree, const NodeLocations& locations, const ItemGrouping& grouping,
                             const DiffusionVariances& variances) {
  check_dimensions(tree, locations, grouping);
  check_variances(variances, grouping);
  const int items = grouping.item_count();
  double total = 0.0;
  for (int v = 0; v < tree.size(); ++v) {
    const int p = tree.parent(v);
    const double length = tree.branch_length(v);
    if (!(length > 0.0)) {
      if (p >= 0 || length < 0.0) throw Error("invalid_tree", "nonpositive branch length");
      for (int j = 0; j < items; ++j)
        if (locations.nodes(v, j) != locations.origin[j]) return -std::numeric_limits<double>::infinity();
      continue;
    }
    for (int j = 0; j < items; ++j) {
      const double from = p < 0 ? locations.origin[j] : locations.nodes(p, j);
      const double var = variances[grouping.group(j)] * length;
      const double d = locations.nodes(v, j) - from;
      total += -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
    }
  }
  return total;
}

Eigen::MatrixXd log_locations_density_gradient(const DdtTree& tree, const NodeLocations& locations,
                                               const ItemGrouping& grouping, const DiffusionVariances& variances) {
  check_dimensions(tree, locations, grouping);
  const int items = grouping.item_count();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(tree.size(), items);
  for (int v = 0; v < tree.size(); ++v) {
    const int p = tree.parent(v);
    const double length = tree.branch_length(v);
    if (!(length > 0.0)) continue;
    for (int j = 0; j < items; ++j) {
      const double from = p < 0 ? locations.origin[j] : locations.nodes(p, j);
      const double g = (locations.nodes(v, j) - from) / (variances[grouping.group(j)] * length);
      grad(v, j) -= g;
      if (p >= 0) grad(p, j) += g;
    }
  }
  return grad;
}

std::vector<Eigen::MatrixXd> leaf_covariance(const DdtTree& tree, const ItemGrouping& grouping,
                                             const DiffusionVariances& variances) {
  check_variances(variances, grouping);
  const auto leaves = tree.class_leaves();
  const int k = static_cast<int>(leaves.size());
  Eigen::MatrixXd shared(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) shared(a, b) = tree.time(tree.mrca(leaves[a], leaves[b]));
  std::vector<Eigen::MatrixXd> out;
  for (int g = 0; g < grouping.group_count(); ++g) out.push_back(variances[g] * shared);
  return out;
}

}  // namespace treelcm
