#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "treelcm/sampler.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

struct SummaryConfig {
  int burnin = 0;
  bool relabel = true;
  double level = 0.95;
  bool quiet = true;
};

// Iterations burnin+1..end.
std::vector<Snapshot> apply_burnin(const std::vector<Snapshot>& snapshots, int burnin);

// Index of the highest log posterior; the earliest wins ties.
std::size_t map_index(const std::vector<Snapshot>& snapshots);
DdtTree map_tree(const std::vector<Snapshot>& snapshots);

// perm[a] is the new label of old class a. Memberships, pi, theta rows and
// the tree's leaf labels ("v<a+1>") move together.
Snapshot permute_snapshot(const Snapshot& snapshot, const std::vector<int>& perm);
// The permutation maximizing agreement between perm(z) and the pivot.
std::vector<int> ecr_permutation(const std::vector<int>& z, const std::vector<int>& pivot, int K);

struct RelabelResult {
  std::vector<Snapshot> snapshots;
  std::vector<std::vector<int>> permutations;
};
// ECR with the MAP iteration's allocation as pivot.
RelabelResult ecr_relabel(const std::vector<Snapshot>& snapshots);

// Sample quantile with inclusive linear interpolation: h = (n - 1) p.
double quantile(std::vector<double> values, double p);

struct Interval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};
Interval summarize_draws(const std::vector<double>& draws, double level);

struct PosteriorSummary {
  int K = 0;
  int J = 0;
  int burnin = 0;
  int retained = 0;
  double level = 0.95;
  bool relabeled = false;
  int map_iteration = 0;
  std::string map_tree;
  std::vector<Interval> pi;
  std::vector<std::vector<Interval>> theta;  // K x J
  std::vector<Interval> sigma2;
  Interval c;
  std::vector<std::vector<int>> permutations;
  std::vector<std::string> item_labels;
  std::vector<std::string> group_names;
  std::vector<int> item_groups;
};

PosteriorSummary summarize(const PosteriorChain& chain, const SummaryConfig& config);
std::string format_summary(const PosteriorSummary& summary);

nlohmann::json summary_to_json(const PosteriorSummary& summary);
PosteriorSummary summary_from_json(const nlohmann::json& record);

}  // namespace treelcm
