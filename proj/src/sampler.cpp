#include "treelcm/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "treelcm/error.hpp"
#include "treelcm/gaussian_tree.hpp"
#include "treelcm/polya_gamma.hpp"

namespace treelcm {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr int kMaxProposalTries = 1000;
constexpr int kKmeansRestarts = 10;

double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

const double& origin_or_parent(const SamplerState& s, int v, int j) {
  const int p = s.tree.parent(v);
  return p < 0 ? s.locations.origin[j] : s.locations.nodes(p, j);
}

// Location log density with node `w` integrated out. `w` must be internal;
// its parent edge may be the zero-length root edge.
double marginal_location_density(const DdtTree& tree, const NodeLocations& loc, int w, const ItemGrouping& grouping,
                                 const Eigen::VectorXd& sigma2) {
  const int items = grouping.item_count();
  const int above = tree.parent(w);
  const auto& ch = tree.node(w).children;
  double total = 0.0;
  for (int v = 0; v < tree.size(); ++v) {
    if (v == w || v == ch[0] || v == ch[1]) continue;
    const int p = tree.parent(v);
    const double length = tree.branch_length(v);
    for (int j = 0; j < items; ++j) {
      const double from = p < 0 ? loc.origin[j] : loc.nodes(p, j);
      total += normal_logpdf(loc.nodes(v, j), from, sigma2[grouping.group(j)] * length);
    }
  }
  const double la = tree.branch_length(w);
  const double lb = tree.branch_length(ch[0]);
  const double lc = tree.branch_length(ch[1]);
  for (int j = 0; j < items; ++j) {
    const double s2 = sigma2[grouping.group(j)];
    const double a = la * s2;
    const double b = lb * s2;
    const double c = lc * s2;
    const double from = above < 0 ? loc.origin[j] : loc.nodes(above, j);
    const double d1 = loc.nodes(ch[0], j) - from;
    const double d2 = loc.nodes(ch[1], j) - from;
    // (x_b, x_c) | x_above ~ N((from, from), [[a + b, a], [a, a + c]])
    const double det = (a + b) * (a + c) - a * a;
    const double quad = ((a + c) * d1 * d1 - 2.0 * a * d1 * d2 + (a + b) * d2 * d2) / det;
    total += -kLogTwoPi - 0.5 * std::log(det) - 0.5 * quad;
  }
  return total;
}

// Location terms on the three edges touching internal node v.
double local_location_density(const DdtTree& tree, const NodeLocations& loc, int v, const ItemGrouping& grouping,
                              const Eigen::VectorXd& sigma2) {
  const int p = tree.parent(v);
  const auto& ch = tree.node(v).children;
  double total = 0.0;
  for (int j = 0; j < grouping.item_count(); ++j) {
    const double s2 = sigma2[grouping.group(j)];
    const double from = p < 0 ? loc.origin[j] : loc.nodes(p, j);
    const double lv = tree.branch_length(v);
    if (lv > 0.0) total += normal_logpdf(loc.nodes(v, j), from, s2 * lv);
    for (int c : ch) total += normal_logpdf(loc.nodes(c, j), loc.nodes(v, j), s2 * tree.branch_length(c));
  }
  return total;
}

// Path of a new DDT lineage through the remnant, conditioned (by rejection)
// to diverge before `cap`.
std::optional<std::pair<int, double>> propose_attachment(const DdtTree& remnant, double cap,
                                                         const DivergenceFunction& divergence, Rng& rng) {
  const auto counts = remnant.leaf_counts();
  for (int attempt = 0; attempt < kMaxProposalTries; ++attempt) {
    int v = remnant.root();
    double start = 0.0;
    for (;;) {
      const double m = counts[v];
      double t = 1.0 - (1.0 - start) * std::exp(-m * rng.exponential() / divergence.c);
      if (t < remnant.time(v)) {
        if (t >= cap) break;
        t = clamp_time(t);
        const int above = remnant.parent(v);
        const double lo = above < 0 ? 0.0 : remnant.time(above);
        if (!(t > lo) || !(t < remnant.time(v)) || !(t < cap)) break;
        return std::make_pair(v, t);
      }
      if (remnant.time(v) >= cap) break;
      start = remnant.time(v);
      const auto& ch = remnant.node(v).children;
      v = (rng.uniform() * m < counts[ch[0]]) ? ch[0] : ch[1];
    }
  }
  return std::nullopt;
}

// Gaussian conditional of internal node v given its parent (or origin) and
// both children.
void resample_internal_node(SamplerState& s, int v, const ItemGrouping& grouping, Rng& rng) {
  const auto& ch = s.tree.node(v).children;
  const double lv = s.tree.branch_length(v);
  for (int j = 0; j < grouping.item_count(); ++j) {
    const double s2 = s.sigma2[grouping.group(j)];
    const double from = origin_or_parent(s, v, j);
    if (!(lv > 0.0)) {
      s.locations.nodes(v, j) = from;
      continue;
    }
    double prec = 1.0 / (s2 * lv);
    double lin = from / (s2 * lv);
    for (int c : ch) {
      const double var = s2 * s.tree.branch_length(c);
      prec += 1.0 / var;
      lin += s.locations.nodes(c, j) / var;
    }
    s.locations.nodes(v, j) = lin / prec + rng.normal() / std::sqrt(prec);
  }
}

}  // namespace

void validate(const SamplerConfig& config) {
  if (config.K < 2) throw Error("invalid_argument", "K must be at least 2");
  if (config.total_iters < 1) throw Error("invalid_argument", "total_iters must be at least 1");
  if (config.topology_moves < 0) throw Error("invalid_argument", "topology_moves must be nonnegative");
  const auto& h = config.hyper;
  for (double v : {h.dirichlet_alpha, h.sigma_shape, h.sigma_rate, h.c_shape, h.c_rate, config.initial_c})
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("invalid_argument", "hyperparameters must be positive");
  if (!(config.random_walk_scale > 0.0)) throw Error("invalid_argument", "random-walk scale must be positive");
  if (config.initial_tree && config.initial_tree->leaf_count() != config.K)
    throw Error("dimension_mismatch", "initial tree must have K leaves");
}

Eigen::MatrixXd SamplerState::theta() const { return response_prob_from_locations(leaf_locations(tree, locations)); }

void check_state(const SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping) {
  auto fail = [](const std::string& what) { throw Error("invariant", what); };
  const int K = s.tree.leaf_count();
  if (s.pi.size() != K) fail("pi length differs from leaf count");
  if (std::abs(s.pi.sum() - 1.0) > 1e-9 || (s.pi.array() < 0.0).any()) fail("pi is not on the simplex");
  if (static_cast<int>(s.z.size()) != data.rows()) fail("one membership per row");
  for (int k : s.z)
    if (k < 0 || k >= K) fail("membership out of range");
  if (s.sigma2.size() != grouping.group_count() || (s.sigma2.array() <= 0.0).any()) fail("sigma2 not positive");
  if (!(s.c > 0.0)) fail("c not positive");
  if (s.locations.nodes.rows() != s.tree.size() || s.locations.nodes.cols() != grouping.item_count())
    fail("location shape");
  if (!s.locations.nodes.allFinite()) fail("non-finite location");
  if (s.omega.size() > 0 && (s.omega.array() <= 0.0).any()) fail("omega not positive");
  for (int v : s.tree.internal_nodes())
    if (s.tree.time(v) < kTimeFloor || s.tree.time(v) > 1.0 - kTimeFloor) fail("divergence time outside clamp");
  if (!std::isfinite(s.log_posterior)) fail("log posterior not finite");
}

double log_leaf_locations_density(const DdtTree& tree, const NodeLocations& locations, const ItemGrouping& grouping,
                                  const DiffusionVariances& variances) {
  const auto leaves = tree.class_leaves();
  const int K = static_cast<int>(leaves.size());
  Eigen::MatrixXd shared(K, K);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) shared(a, b) = tree.time(tree.mrca(leaves[a], leaves[b]));
  const Eigen::LLT<Eigen::MatrixXd> chol(shared);
  if (chol.info() != Eigen::Success) throw Error("invalid_tree", "leaf covariance is not positive definite");
  const Eigen::MatrixXd L = chol.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  double total = 0.0;
  Eigen::VectorXd r(K);
  for (int j = 0; j < grouping.item_count(); ++j) {
    const double var = variances[grouping.group(j)];
    for (int a = 0; a < K; ++a) r[a] = locations.nodes(leaves[a], j) - locations.origin[j];
    const double quad = chol.matrixL().solve(r).squaredNorm();
    total += -0.5 * (K * kLogTwoPi + K * std::log(var) + log_det + quad / var);
  }
  return total;
}

double log_posterior(const SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping,
                     const Hyperparameters& hyper) {
  const int K = static_cast<int>(s.pi.size());
  double lp = loglik_marginal(data, s.theta(), s.pi);
  lp += std::lgamma(K * hyper.dirichlet_alpha) - K * std::lgamma(hyper.dirichlet_alpha);
  if (hyper.dirichlet_alpha != 1.0) lp += (hyper.dirichlet_alpha - 1.0) * s.pi.array().log().sum();
  lp += log_tree_density(s.tree, DivergenceFunction(s.c));
  lp += hyper.c_shape * std::log(hyper.c_rate) - std::lgamma(hyper.c_shape) + (hyper.c_shape - 1.0) * std::log(s.c) -
        hyper.c_rate * s.c;
  lp += log_leaf_locations_density(s.tree, s.locations, grouping, s.sigma2);
  for (double v : s.sigma2) {
    lp += hyper.sigma_shape * std::log(hyper.sigma_rate) - std::lgamma(hyper.sigma_shape) -
          (hyper.sigma_shape + 1.0) * std::log(v) - hyper.sigma_rate / v;
  }
  return lp;
}

LocationEvidence location_evidence(const SamplerState& s, const ResponseMatrix& data, int item) {
  LocationEvidence ev{std::vector<double>(s.tree.size(), 0.0), std::vector<double>(s.tree.size(), 0.0)};
  const auto leaves = s.tree.class_leaves();
  for (int i = 0; i < data.rows(); ++i) {
    const int leaf = leaves[s.z[i]];
    ev.precision[leaf] += s.omega(i, item);
    ev.shift[leaf] += data(i, item) - 0.5;
  }
  return ev;
}

void step_pg_auxiliary(SamplerState& s, const ResponseMatrix& data, Rng& rng) {
  const auto leaves = s.tree.class_leaves();
  s.omega.resize(data.rows(), data.cols());
  for (int i = 0; i < data.rows(); ++i) {
    const int leaf = leaves[s.z[i]];
    for (int j = 0; j < data.cols(); ++j) s.omega(i, j) = sample_polya_gamma(s.locations.nodes(leaf, j), rng);
  }
}

void step_leaf_locations(SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping, Rng& rng) {
  for (int j = 0; j < grouping.item_count(); ++j) {
    const auto ev = location_evidence(s, data, j);
    const TreeGaussianPosterior posterior(s.tree, s.sigma2[grouping.group(j)], s.locations.origin[j], ev.precision,
                                          ev.shift);
    const auto draw = posterior.sample(rng);
    for (int v = 0; v < s.tree.size(); ++v) s.locations.nodes(v, j) = draw[v];
  }
}

void step_locations_random_walk(SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping,
                                double scale, Rng& rng) {
  const int K = s.tree.leaf_count();
  const int items = grouping.item_count();
  Eigen::VectorXd members = Eigen::VectorXd::Zero(K);
  Eigen::MatrixXd positives = Eigen::MatrixXd::Zero(K, items);
  for (int i = 0; i < data.rows(); ++i) {
    members[s.z[i]] += 1.0;
    for (int j = 0; j < items; ++j) positives(s.z[i], j) += data(i, j);
  }
  const auto leaves = s.tree.class_leaves();
  std::vector<int> class_of(s.tree.size(), -1);
  for (int k = 0; k < K; ++k) class_of[leaves[k]] = k;

  for (int v : s.tree.preorder()) {
    if (!s.tree.is_leaf(v)) {
      resample_internal_node(s, v, grouping, rng);
      continue;
    }
    const int k = class_of[v];
    const double length = s.tree.branch_length(v);
    for (int j = 0; j < items; ++j) {
      const double var = s.sigma2[grouping.group(j)] * length;
      const double from = origin_or_parent(s, v, j);
      auto log_target = [&](double x) {
        const double log1pexp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        return normal_logpdf(x, from, var) + positives(k, j) * x - members[k] * log1pexp;
      };
      const double current = s.locations.nodes(v, j);
      const double proposal = current + scale * rng.normal();
      if (std::log(rng.uniform()) < log_target(proposal) - log_target(current)) s.locations.nodes(v, j) = proposal;
    }
  }
}

void step_diffusion_variances(SamplerState& s, const ItemGrouping& grouping, const Hyperparameters& hyper,
                              Rng& rng) {
  const int groups = grouping.group_count();
  std::vector<double> count(groups, 0.0);
  std::vector<double> squares(groups, 0.0);
  for (int v = 0; v < s.tree.size(); ++v) {
    const double length = s.tree.branch_length(v);
    if (!(length > 0.0)) continue;
    for (int j = 0; j < grouping.item_count(); ++j) {
      const double d = s.locations.nodes(v, j) - origin_or_parent(s, v, j);
      const int g = grouping.group(j);
      count[g] += 1.0;
      squares[g] += d * d / length;
    }
  }
  for (int g = 0; g < groups; ++g)
    s.sigma2[g] = rng.inverse_gamma(hyper.sigma_shape + 0.5 * count[g], hyper.sigma_rate + 0.5 * squares[g]);
}

void step_divergence_parameter(SamplerState& s, const Hyperparameters& hyper, Rng& rng) {
  const auto stats = divergence_statistics(s.tree);
  s.c = rng.gamma(hyper.c_shape + stats.divergences, hyper.c_rate + stats.exposure);
  s.c = std::max(s.c, std::numeric_limits<double>::min());
}

void step_memberships(SamplerState& s, const ResponseMatrix& data, Rng& rng) {
  const Eigen::MatrixXd theta = s.theta();
  const int K = static_cast<int>(s.pi.size());
  const Eigen::MatrixXd log_yes = theta.array().log();
  const Eigen::MatrixXd log_no = (1.0 - theta.array()).log();
  std::vector<double> weights(K);
  for (int i = 0; i < data.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      double acc = std::log(s.pi[k]);
      for (int j = 0; j < data.cols(); ++j) acc += data(i, j) ? log_yes(k, j) : log_no(k, j);
      weights[k] = acc;
      top = std::max(top, acc);
    }
    for (double& w : weights) w = std::exp(w - top);
    s.z[i] = static_cast<int>(rng.categorical(weights));
  }
}

void step_class_probability(SamplerState& s, const Hyperparameters& hyper, Rng& rng) {
  const int K = static_cast<int>(s.pi.size());
  std::vector<double> alpha(K, hyper.dirichlet_alpha);
  for (int k : s.z) alpha[k] += 1.0;
  const auto draw = rng.dirichlet(alpha);
  for (int k = 0; k < K; ++k) s.pi[k] = draw[k];
}

double log_attachment_density(const DdtTree& remnant, int edge, double time, const DivergenceFunction& divergence) {
  std::vector<int> path;
  for (int v = edge; v >= 0; v = remnant.parent(v)) path.push_back(v);
  std::reverse(path.begin(), path.end());
  const auto counts = remnant.leaf_counts();
  double logq = 0.0;
  double start = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const int v = path[i];
    const double m = counts[v];
    if (v == edge) {
      logq += std::log(divergence.rate(time) / m) - (divergence.cumulative(time) - divergence.cumulative(start)) / m;
      break;
    }
    logq -= (divergence.cumulative(remnant.time(v)) - divergence.cumulative(start)) / m;
    start = remnant.time(v);
    logq += std::log(counts[path[i + 1]] / m);
  }
  return logq;
}

double topology_move_log_ratio(const SamplerState& s, const ItemGrouping& grouping,
                               const SubtreeDetachment& det, int edge, double time) {
  const DivergenceFunction divergence(s.c);
  const Attachment att = attach(det.remnant, det.subtree, edge, time);

  NodeLocations moved{Eigen::MatrixXd::Zero(att.tree.size(), grouping.item_count()), s.locations.origin};
  int dissolved = -1;
  for (int u = 0; u < s.tree.size(); ++u) {
    int target = -1;
    if (det.remnant_index[u] >= 0) {
      target = att.from_remnant[det.remnant_index[u]];
    } else if (det.subtree_index[u] >= 0) {
      target = att.from_subtree[det.subtree_index[u]];
    } else {
      dissolved = u;
      continue;
    }
    moved.nodes.row(target) = s.locations.nodes.row(u);
  }

  const double old_side = log_tree_density(s.tree, divergence) +
                          marginal_location_density(s.tree, s.locations, dissolved, grouping, s.sigma2) +
                          log_attachment_density(det.remnant, edge, time, divergence);
  const double new_side = log_tree_density(att.tree, divergence) +
                          marginal_location_density(att.tree, moved, att.joint, grouping, s.sigma2) +
                          log_attachment_density(det.remnant, det.edge, det.time, divergence);
  return new_side - old_side;
}

TopologyMoveStats step_tree_topology(SamplerState& s, const ItemGrouping& grouping, int moves, Rng& rng) {
  TopologyMoveStats stats;
  for (int m = 0; m < moves; ++m) {
    if (s.tree.leaf_count() < 3) {
      ++stats.skipped;
      continue;
    }
    ++stats.attempted;
    std::vector<int> candidates;
    for (int v = 0; v < s.tree.size(); ++v)
      if (v != s.tree.root()) candidates.push_back(v);
    const int node = candidates[rng.uniform_index(candidates.size())];
    const SubtreeDetachment det = detach_subtree(s.tree, node);
    const double cap = det.subtree.time(det.subtree.root());

    const auto proposal = propose_attachment(det.remnant, cap, DivergenceFunction(s.c), rng);
    if (!proposal) {
      ++stats.invalid;
      continue;
    }
    const auto [edge, time] = *proposal;
    const double log_ratio = topology_move_log_ratio(s, grouping, det, edge, time);
    if (!(std::log(rng.uniform()) < log_ratio)) continue;

    const Attachment att = attach(det.remnant, det.subtree, edge, time);
    NodeLocations moved{Eigen::MatrixXd::Zero(att.tree.size(), grouping.item_count()), s.locations.origin};
    for (int u = 0; u < s.tree.size(); ++u) {
      if (det.remnant_index[u] >= 0) {
        moved.nodes.row(att.from_remnant[det.remnant_index[u]]) = s.locations.nodes.row(u);
      } else if (det.subtree_index[u] >= 0) {
        moved.nodes.row(att.from_subtree[det.subtree_index[u]]) = s.locations.nodes.row(u);
      }
    }
    s.tree = att.tree;
    s.locations = std::move(moved);
    resample_internal_node(s, att.joint, grouping, rng);
    ++stats.accepted;
  }
  return stats;
}

void step_internal_locations(SamplerState& s, const ItemGrouping& grouping, Rng& rng) {
  for (int v : s.tree.preorder())
    if (!s.tree.is_leaf(v)) resample_internal_node(s, v, grouping, rng);
}

namespace {

// Log tree density with c integrated out against its Gamma prior, up to a
// constant that does not depend on the divergence times.
double collapsed_tree_density(const DdtTree& tree, const Hyperparameters& hyper) {
  const auto stats = divergence_statistics(tree);
  const double shape = hyper.c_shape + stats.divergences;
  return log_tree_density(tree, DivergenceFunction(1.0)) + stats.exposure + std::lgamma(shape) -
         shape * std::log(hyper.c_rate + stats.exposure);
}

// Sum over items of the log Gaussian evidence of the omega-augmented
// responses, node locations integrated out. Only items of `group` if >= 0.
double log_location_evidence(const SamplerState& s, const DdtTree& tree, const ResponseMatrix& data,
                             const ItemGrouping& grouping, const Eigen::VectorXd& sigma2, int group = -1) {
  const auto leaves = tree.class_leaves();
  double total = 0.0;
  std::vector<double> precision(tree.size()), shift(tree.size());
  for (int j = 0; j < grouping.item_count(); ++j) {
    if (group >= 0 && grouping.group(j) != group) continue;
    std::fill(precision.begin(), precision.end(), 0.0);
    std::fill(shift.begin(), shift.end(), 0.0);
    for (int i = 0; i < data.rows(); ++i) {
      precision[leaves[s.z[i]]] += s.omega(i, j);
      shift[leaves[s.z[i]]] += data(i, j) - 0.5;
    }
    total += TreeGaussianPosterior(tree, sigma2[grouping.group(j)], s.locations.origin[j], precision, shift)
                 .log_evidence();
  }
  return total;
}

// One MH pass over the internal divergence times. `target(tree, v)` is the
// log target up to terms that do not involve the time of v.
template <class Target>
int update_divergence_times(SamplerState& s, Rng& rng, Target target) {
  int accepted = 0;
  for (int v : s.tree.internal_nodes()) {
    const int p = s.tree.parent(v);
    const auto& ch = s.tree.node(v).children;
    const double lo = p < 0 ? 0.0 : s.tree.time(p);
    const double hi = std::min(s.tree.time(ch[0]), s.tree.time(ch[1]));
    const double width = hi - lo;
    const double current = s.tree.time(v);
    // Uniform on the interval, or a random walk on logit((t - lo) / width) so
    // that mass piled against either end (small c puts t near 1) is reachable.
    double proposal;
    double log_jacobian = 0.0;
    const double u = rng.uniform();
    if (u < 1.0 / 3.0) {
      proposal = lo + width * rng.uniform();
    } else {
      const double scale = u < 2.0 / 3.0 ? 0.5 : 4.0;
      const double w = std::log(current - lo) - std::log(hi - current) + scale * rng.normal();
      proposal = w > 0.0 ? hi - width / (1.0 + std::exp(w)) : lo + width / (1.0 + std::exp(-w));
      log_jacobian = std::log(proposal - lo) + std::log(hi - proposal) - std::log(current - lo) -
                     std::log(hi - current);
    }
    proposal = clamp_time(proposal);
    if (!(proposal > lo) || !(proposal < hi) || proposal == current) continue;

    DdtTree moved = s.tree.with_time(v, proposal);
    if (std::log(rng.uniform()) < log_jacobian + target(moved, v) - target(s.tree, v)) {
      s.tree = std::move(moved);
      ++accepted;
    }
  }
  return accepted;
}

}  // namespace

int step_divergence_times(SamplerState& s, const ItemGrouping& grouping, Rng& rng) {
  const DivergenceFunction divergence(s.c);
  return update_divergence_times(s, rng, [&](const DdtTree& tree, int v) {
    return log_tree_density(tree, divergence) + local_location_density(tree, s.locations, v, grouping, s.sigma2);
  });
}

int step_divergence_times_and_c(SamplerState& s, const ItemGrouping& grouping, const Hyperparameters& hyper,
                                Rng& rng) {
  const int accepted = update_divergence_times(s, rng, [&](const DdtTree& tree, int v) {
    return collapsed_tree_density(tree, hyper) + local_location_density(tree, s.locations, v, grouping, s.sigma2);
  });
  step_divergence_parameter(s, hyper, rng);
  return accepted;
}

int step_divergence_times_collapsed(SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping,
                                    const Hyperparameters& hyper, bool fix_c, Rng& rng) {
  const DivergenceFunction divergence(s.c);
  const int accepted = update_divergence_times(s, rng, [&](const DdtTree& tree, int) {
    return (fix_c ? log_tree_density(tree, divergence) : collapsed_tree_density(tree, hyper)) +
           log_location_evidence(s, tree, data, grouping, s.sigma2);
  });
  if (!fix_c) step_divergence_parameter(s, hyper, rng);
  return accepted;
}

int step_diffusion_variances_collapsed(SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping,
                                       const Hyperparameters& hyper, Rng& rng) {
  constexpr int kSteps = 3;
  constexpr double kScale = 0.5;
  int accepted = 0;
  for (int g = 0; g < grouping.group_count(); ++g) {
    // Inverse-gamma prior on log sigma2 (Jacobian included) plus the evidence.
    auto target = [&](const Eigen::VectorXd& sigma2) {
      return -hyper.sigma_shape * std::log(sigma2[g]) - hyper.sigma_rate / sigma2[g] +
             log_location_evidence(s, s.tree, data, grouping, sigma2, g);
    };
    double current = target(s.sigma2);
    for (int step = 0; step < kSteps; ++step) {
      Eigen::VectorXd proposal = s.sigma2;
      proposal[g] *= std::exp(kScale * rng.normal());
      if (!(proposal[g] > 0.0) || !std::isfinite(proposal[g])) continue;
      const double value = target(proposal);
      if (std::log(rng.uniform()) < value - current) {
        s.sigma2 = std::move(proposal);
        current = value;
        ++accepted;
      }
    }
  }
  return accepted;
}

int step_diffusion_scale(SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping,
                         const Hyperparameters& hyper, Rng& rng) {
  constexpr int kSteps = 10;
  constexpr double kScale = 0.5;
  int accepted = 0;
  double current_lik = loglik_complete(data, s.z, s.theta(), s.pi);
  for (int g = 0; g < grouping.group_count(); ++g) {
    for (int step = 0; step < kSteps; ++step) {
      const double delta = kScale * rng.normal();
      const double proposal = s.sigma2[g] * std::exp(delta);
      if (!(proposal > 0.0) || !std::isfinite(proposal)) continue;
      // Scaling every increment by sqrt(ratio) leaves the Brownian prior
      // term times the Jacobian at exactly 1.
      const double factor = std::exp(0.5 * delta);
      NodeLocations moved = s.locations;
      for (int j = 0; j < grouping.item_count(); ++j)
        if (grouping.group(j) == g)
          moved.nodes.col(j) = (moved.nodes.col(j).array() - moved.origin[j]) * factor + moved.origin[j];
      const double lik = loglik_complete(
          data, s.z, response_prob_from_locations(leaf_locations(s.tree, moved)), s.pi);
      const double log_ratio = lik - current_lik - hyper.sigma_shape * delta -
                               hyper.sigma_rate * (1.0 / proposal - 1.0 / s.sigma2[g]);
      if (std::log(rng.uniform()) < log_ratio) {
        s.sigma2[g] = proposal;
        s.locations = std::move(moved);
        current_lik = lik;
        ++accepted;
      }
    }
  }
  return accepted;
}

TopologyMoveStats sweep(SamplerState& s, const ResponseMatrix& data, const ItemGrouping& grouping,
                        const SamplerConfig& config, Rng& rng) {
  const auto topo = step_tree_topology(s, grouping, config.topology_moves, rng);
  if (config.location_update == LocationUpdate::polya_gamma) {
    // Times, c and sigma2 move with the locations integrated out given omega;
    // the locations are then redrawn exactly before anything else reads them.
    step_pg_auxiliary(s, data, rng);
    step_divergence_times_collapsed(s, data, grouping, config.hyper, config.fix_c, rng);
    step_diffusion_variances_collapsed(s, data, grouping, config.hyper, rng);
    step_leaf_locations(s, data, grouping, rng);
  } else {
    if (config.fix_c) {
      step_divergence_times(s, grouping, rng);
    } else {
      step_divergence_times_and_c(s, grouping, config.hyper, rng);
    }
    step_locations_random_walk(s, data, grouping, config.random_walk_scale, rng);
  }
  step_diffusion_variances(s, grouping, config.hyper, rng);
  step_diffusion_scale(s, data, grouping, config.hyper, rng);
  step_memberships(s, data, rng);
  step_class_probability(s, config.hyper, rng);
  s.log_posterior = log_posterior(s, data, grouping, config.hyper);
  if (config.check_invariants) check_state(s, data, grouping);
  return topo;
}

namespace {

struct Clustering {
  Eigen::MatrixXd centers;
  std::vector<int> label;
  double within = 0.0;  // total squared distance to the assigned centers
};

// k-means++ seeding, then Lloyd iterations on the binary rows.
Clustering kmeans(const Eigen::MatrixXd& rows, int K, Rng& rng) {
  const int N = static_cast<int>(rows.rows());
  const int J = static_cast<int>(rows.cols());
  Eigen::MatrixXd centers(K, J);
  centers.row(0) = rows.row(rng.uniform_index(N));
  std::vector<double> nearest(N, std::numeric_limits<double>::infinity());
  for (int k = 1; k < K; ++k) {
    for (int i = 0; i < N; ++i) nearest[i] = std::min(nearest[i], (rows.row(i) - centers.row(k - 1)).squaredNorm());
    const double mass = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    centers.row(k) = rows.row(mass > 0.0 ? static_cast<int>(rng.categorical(nearest)) : rng.uniform_index(N));
  }
  std::vector<int> label(N, 0);
  for (int iter = 0; iter < 25; ++iter) {
    bool changed = false;
    for (int i = 0; i < N; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        const double d = (rows.row(i) - centers.row(k)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      changed |= label[i] != best;
      label[i] = best;
    }
    std::vector<int> size(K, 0);
    centers.setZero();
    for (int i = 0; i < N; ++i) {
      centers.row(label[i]) += rows.row(i);
      ++size[label[i]];
    }
    for (int k = 0; k < K; ++k) {
      if (size[k] > 0) {
        centers.row(k) /= size[k];
        continue;
      }
      // Empty cluster: take the row farthest from its current center.
      int far = 0;
      double far_d = -1.0;
      for (int i = 0; i < N; ++i) {
        const double d = (rows.row(i) - centers.row(label[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      label[far] = k;
      centers.row(k) = rows.row(far);
      changed = true;
    }
    if (!changed && iter > 0) break;
  }
  double within = 0.0;
  for (int i = 0; i < N; ++i) within += (rows.row(i) - centers.row(label[i])).squaredNorm();
  return {centers, label, within};
}

}  // namespace

SamplerState initialize_state(const ResponseMatrix& data, const ItemGrouping& grouping, const SamplerConfig& config,
                              Rng& rng) {
  validate(config);
  const int N = data.rows();
  const int J = data.cols();
  const int K = config.K;
  if (J != grouping.item_count()) throw Error("dimension_mismatch", "data columns differ from grouped item count");
  if (K > N) throw Error("invalid_argument", "K = " + std::to_string(K) + " exceeds the number of observations");

  // Best of several k-means++ restarts.
  Eigen::MatrixXd rows(N, J);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < J; ++j) rows(i, j) = data(i, j);
  Clustering best = kmeans(rows, K, rng);
  for (int restart = 1; restart < kKmeansRestarts; ++restart) {
    Clustering next = kmeans(rows, K, rng);
    if (next.within < best.within) best = std::move(next);
  }
  const Eigen::MatrixXd& centers = best.centers;
  const std::vector<int>& label = best.label;
  const Eigen::MatrixXd means = centers.cwiseMax(0.05).cwiseMin(0.95);

  SamplerState s;
  if (config.initial_tree) {
    s.tree = *config.initial_tree;
  } else {
    // Complete linkage on mean absolute differences between class means.
    std::vector<std::vector<int>> members(K);
    std::vector<int> cluster_node(K);
    std::vector<TreeNode> nodes;
    for (int k = 0; k < K; ++k) {
      members[k] = {k};
      cluster_node[k] = k;
      nodes.push_back(TreeNode{-1, {-1, -1}, 1.0, "v" + std::to_string(k + 1)});
    }
    std::vector<double> height(K, 0.0);
    std::vector<int> alive(K);
    std::iota(alive.begin(), alive.end(), 0);
    auto distance = [&](int a, int b) { return (means.row(a) - means.row(b)).cwiseAbs().mean(); };
    while (alive.size() > 1) {
      std::size_t ba = 0;
      std::size_t bb = 1;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t x = 0; x < alive.size(); ++x) {
        for (std::size_t y = x + 1; y < alive.size(); ++y) {
          double link = 0.0;
          for (int a : members[alive[x]])
            for (int b : members[alive[y]]) link = std::max(link, distance(a, b));
          if (link < best) {
            best = link;
            ba = x;
            bb = y;
          }
        }
      }
      const int ca = alive[ba];
      const int cb = alive[bb];
      const int joint = static_cast<int>(nodes.size());
      nodes.push_back(TreeNode{-1, {cluster_node[ca], cluster_node[cb]}, 0.0, {}});
      nodes[cluster_node[ca]].parent = joint;
      nodes[cluster_node[cb]].parent = joint;
      height.push_back(best);
      members[ca].insert(members[ca].end(), members[cb].begin(), members[cb].end());
      cluster_node[ca] = joint;
      alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    const int root = cluster_node[alive.front()];
    const double top = height[root];
    for (int v = K; v < static_cast<int>(nodes.size()); ++v)
      nodes[v].time = top > 0.0 ? 0.1 + 0.8 * (1.0 - height[v] / top) : 0.5;
    // Preorder pass enforcing strictly increasing times.
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (nodes[v].children[0] < 0) continue;
      for (int c : nodes[v].children) {
        if (nodes[c].children[0] >= 0 && nodes[c].time <= nodes[v].time)
          nodes[c].time = nodes[v].time + 0.5 * (1.0 - nodes[v].time) * 0.1;
        stack.push_back(c);
      }
    }
    s.tree = DdtTree(std::move(nodes), root);
  }
  if (s.tree.time(s.tree.root()) < kTimeFloor) {
    const auto& ch = s.tree.node(s.tree.root()).children;
    s.tree = s.tree.with_time(s.tree.root(), 0.5 * std::min(s.tree.time(ch[0]), s.tree.time(ch[1])));
  }

  s.locations.origin = Eigen::VectorXd::Constant(J, config.root_location);
  s.locations.nodes = Eigen::MatrixXd::Zero(s.tree.size(), J);
  const auto leaves = s.tree.class_leaves();
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < J; ++j) s.locations.nodes(leaves[k], j) = logit(means(k, j));
  for (int v : s.tree.postorder()) {
    if (s.tree.is_leaf(v)) continue;
    const auto& ch = s.tree.node(v).children;
    s.locations.nodes.row(v) = 0.5 * (s.locations.nodes.row(ch[0]) + s.locations.nodes.row(ch[1]));
  }
  s.sigma2 = Eigen::VectorXd::Ones(grouping.group_count());
  s.c = config.initial_c;
  s.pi = Eigen::VectorXd::Constant(K, 1.0 / K);
  s.z = label;
  s.omega = Eigen::MatrixXd::Constant(N, J, 0.25);
  s.log_posterior = log_posterior(s, data, grouping, config.hyper);
  return s;
}

Snapshot make_snapshot(const SamplerState& s, int iteration, bool topology_accepted) {
  Snapshot snap;
  snap.iteration = iteration;
  snap.tree = to_newick(s.tree);
  snap.theta = s.theta();
  snap.pi = s.pi;
  snap.sigma2 = s.sigma2;
  snap.c = s.c;
  snap.z = s.z;
  snap.log_posterior = s.log_posterior;
  snap.topology_accepted = topology_accepted;
  return snap;
}

std::string run_header(int K, int N, int J, int G, int total_iters) {
  const std::string rule(45, '-');
  return rule + "\nDDT-LCM with K = " + std::to_string(K) + " latent classes run on " + std::to_string(N) +
         " observations and " + std::to_string(J) + " items in " + std::to_string(G) + " major groups. " +
         std::to_string(total_iters) + " iterations of posterior samples drawn.\n" + rule;
}

PosteriorChain ddtlcm_fit(const ResponseMatrix& data, const ItemGrouping& grouping, const SamplerConfig& config,
                          std::ostream* report) {
  validate(config);
  if (config.K > data.rows())
    throw Error("invalid_argument", "K = " + std::to_string(config.K) + " latent classes exceeds the " +
                                        std::to_string(data.rows()) + " observations");
  if (grouping.item_count() != data.cols()) throw Error("dimension_mismatch", "grouping does not cover the items");
  const auto started = std::chrono::steady_clock::now();
  Rng rng(config.seed);
  SamplerState state = initialize_state(data, grouping, config, rng);

  PosteriorChain chain;
  auto& meta = chain.meta;
  meta.N = data.rows();
  meta.J = data.cols();
  meta.G = grouping.group_count();
  meta.K = config.K;
  meta.total_iters = config.total_iters;
  meta.seed = config.seed;
  meta.hyper = config.hyper;
  meta.topology_moves = config.topology_moves;
  meta.fix_c = config.fix_c;
  meta.location_update = config.location_update == LocationUpdate::polya_gamma ? "polya_gamma" : "random_walk";
  meta.item_labels = data.item_labels();
  meta.item_groups = grouping.group_of_item();

  chain.snapshots.reserve(config.total_iters);
  for (int it = 1; it <= config.total_iters; ++it) {
    const auto topo = sweep(state, data, grouping, config, rng);
    if (!std::isfinite(state.log_posterior))
      throw Error("numerical", "log posterior became non-finite at iteration " + std::to_string(it));
    meta.topology_attempted += topo.attempted;
    meta.topology_accepted += topo.accepted;
    chain.snapshots.push_back(make_snapshot(state, it, topo.accepted > 0));
  }
  meta.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (report) *report << run_header(meta.K, meta.N, meta.J, meta.G, meta.total_iters) << '\n';
  return chain;
}

}  // namespace treelcm
