#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "treelcm/ddt_prior.hpp"
#include "treelcm/lcm_model.hpp"
#include "treelcm/rng.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

struct Hyperparameters {
  double dirichlet_alpha = 1.0;  // symmetric Dirichlet on pi
  double sigma_shape = 2.0;      // inverse-Gamma on each sigma2_g
  double sigma_rate = 2.0;
  double c_shape = 1.0;  // Gamma on the divergence parameter
  double c_rate = 1.0;
};

enum class LocationUpdate { polya_gamma, random_walk };

struct SamplerConfig {
  int K = 2;
  int total_iters = 100;
  std::uint64_t seed = 1;
  std::optional<DdtTree> initial_tree;
  Hyperparameters hyper;
  int topology_moves = 1;
  bool fix_c = false;
  double initial_c = 1.0;
  double root_location = 0.0;
  LocationUpdate location_update = LocationUpdate::polya_gamma;
  double random_walk_scale = 0.5;
  // Re-validate the whole state after every sweep (slow; for tests).
  bool check_invariants = false;
};

void validate(const SamplerConfig& config);

struct SamplerState {
  DdtTree tree;
  NodeLocations locations;
  Eigen::VectorXd sigma2;
  double c = 1.0;
  Eigen::VectorXd pi;
  std::vector<int> z;     // 0-based class per row
  Eigen::MatrixXd omega;  // N x J Polya-Gamma auxiliaries
  double log_posterior = 0.0;

  // Item response probabilities in class order (K x J).
  Eigen::MatrixXd theta() const;
};

// Throws Error("invariant") naming the first violated invariant.
void check_state(const SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping);

// Deterministic start: best of several k-means++ runs, complete-linkage tree
// over the class means, logit-mean leaf locations, uniform pi, sigma2 = 1.
SamplerState initialize_state(const ResponseMatrix& data, const ItemGrouping& grouping, const SamplerConfig& config,
                              Rng& rng);

// Log density of the leaf locations with internal nodes integrated out:
// per item, N(origin, sigma2_g * [shared path length]) over the K leaves.
double log_leaf_locations_density(const DdtTree& tree, const NodeLocations& locations, const ItemGrouping& grouping,
                                  const DiffusionVariances& variances);
// Unnormalized log posterior of the reported parameters (tree, leaf
// locations, pi, sigma2, c): memberships are summed out and internal node
// locations integrated out.
double log_posterior(const SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping,
                     const Hyperparameters& hyper);

// Per-leaf Gaussian evidence for item j after Polya-Gamma augmentation:
// precision = sum of omega_ij over rows in the class, shift = sum of (y_ij - 1/2).
struct LocationEvidence {
  std::vector<double> precision;  // indexed by tree node
  std::vector<double> shift;
};
LocationEvidence location_evidence(const SamplerState& state, const ResponseMatrix& data, int item);

void step_pg_auxiliary(SamplerState& state, const ResponseMatrix& data, Rng& rng);
// Joint draw of all node locations, item by item, by Gaussian message passing.
void step_leaf_locations(SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping, Rng& rng);
// Fallback: random-walk MH on leaves, exact Gaussian conditionals on internal nodes.
void step_locations_random_walk(SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping,
                                double scale, Rng& rng);
void step_diffusion_variances(SamplerState& state, const ItemGrouping& grouping, const Hyperparameters& hyper,
                              Rng& rng);
void step_divergence_parameter(SamplerState& state, const Hyperparameters& hyper, Rng& rng);
void step_memberships(SamplerState& state, const ResponseMatrix& data, Rng& rng);
void step_class_probability(SamplerState& state, const Hyperparameters& hyper, Rng& rng);

// Log acceptance ratio for moving the subtree of `detachment` to (edge, time)
// of its remnant. The dissolved/created divergence node is integrated out of
// the location density; the proposal is a DDT path through the remnant.
double topology_move_log_ratio(const SamplerState& state, const ItemGrouping& grouping,
                               const SubtreeDetachment& detachment, int edge, double time);
// Unnormalized log density of a DDT path through `remnant` diverging on the
// edge above `edge` at `time`.
double log_attachment_density(const DdtTree& remnant, int edge, double time, const DivergenceFunction& divergence);

struct TopologyMoveStats {
  int attempted = 0;
  int accepted = 0;
  int skipped = 0;  // K < 3: no prune-regraft move exists
  int invalid = 0;  // proposal failed to diverge before the subtree root
};
TopologyMoveStats step_tree_topology(SamplerState& state, const ItemGrouping& grouping, int moves, Rng& rng);
// Gibbs update of each internal node location given its three neighbors.
void step_internal_locations(SamplerState& state, const ItemGrouping& grouping, Rng& rng);
// MH update of each internal divergence time within its parent/children bounds.
int step_divergence_times(SamplerState& state, const ItemGrouping& grouping, Rng& rng);
// Blocked update of (times, c): the same moves with c integrated out of the
// tree density, then c drawn from its Gamma full conditional.
int step_divergence_times_and_c(SamplerState& state, const ItemGrouping& grouping, const Hyperparameters& hyper,
                                Rng& rng);
// Time moves given omega with all node locations integrated out (and c too
// unless fix_c, followed by a draw of c). Node locations are stale afterwards
// and must be redrawn with step_leaf_locations.
int step_divergence_times_collapsed(SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping,
                                    const Hyperparameters& hyper, bool fix_c, Rng& rng);
// Random-walk MH on log sigma2 per group given omega, locations integrated
// out; same staleness rule as above. Returns the number of accepted steps.
int step_diffusion_variances_collapsed(SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping,
                                       const Hyperparameters& hyper, Rng& rng);

// Joint random-walk MH on log sigma2 per group with that group's locations
// rescaled about the origin; only the likelihood and the sigma2 prior enter.
int step_diffusion_scale(SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping,
                         const Hyperparameters& hyper, Rng& rng);

// One full sweep: topology MH, omega, divergence times with c and sigma2
// (locations integrated out), locations, sigma2 given locations, a joint
// sigma2/location scale move, z, pi. Returns the topology move counts.
TopologyMoveStats sweep(SamplerState& state, const ResponseMatrix& data, const ItemGrouping& grouping,
                        const SamplerConfig& config, Rng& rng);

struct Snapshot {
  int iteration = 0;  // 1-based
  std::string tree;   // canonical Newick
  Eigen::MatrixXd theta;
  Eigen::VectorXd pi;
  Eigen::VectorXd sigma2;
  double c = 0.0;
  std::vector<int> z;  // 0-based
  double log_posterior = 0.0;
  bool topology_accepted = false;
};

Snapshot make_snapshot(const SamplerState& state, int iteration, bool topology_accepted);

struct ChainMeta {
  int N = 0;
  int J = 0;
  int G = 0;
  int K = 0;
  int total_iters = 0;
  std::uint64_t seed = 0;
  double wall_time_seconds = 0.0;
  Hyperparameters hyper;
  int topology_moves = 1;
  bool fix_c = false;
  std::string location_update = "polya_gamma";
  std::vector<std::string> item_labels;
  std::vector<std::string> group_names;
  std::vector<int> item_groups;  // 0-based group per item
  int topology_accepted = 0;
  int topology_attempted = 0;
};

struct PosteriorChain {
  ChainMeta meta;
  std::vector<Snapshot> snapshots;
};

std::string run_header(int K, int N, int J, int G, int total_iters);

// Runs config.total_iters sweeps and returns every snapshot. The run header
// is written to `report` when given.
PosteriorChain ddtlcm_fit(const ResponseMatrix& data, const ItemGrouping& grouping, const SamplerConfig& config,
                          std::ostream* report = nullptr);

}  // namespace treelcm
