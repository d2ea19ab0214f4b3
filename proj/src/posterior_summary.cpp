#include "treelcm/posterior_summary.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "treelcm/assignment.hpp"
#include "treelcm/chain_io.hpp"
#include "treelcm/error.hpp"

namespace treelcm {

using nlohmann::json;

std::vector<Snapshot> apply_burnin(const std::vector<Snapshot>& snapshots, int burnin) {
  if (burnin < 0) throw Error("invalid_argument", "burn-in must be nonnegative");
  if (burnin >= static_cast<int>(snapshots.size()))
    throw Error("invalid_argument", "burn-in of " + std::to_string(burnin) + " leaves no iterations out of " +
                                        std::to_string(snapshots.size()));
  return {snapshots.begin() + burnin, snapshots.end()};
}

std::size_t map_index(const std::vector<Snapshot>& snapshots) {
  if (snapshots.empty()) throw Error("invalid_argument", "empty chain");
  std::size_t best = 0;
  for (std::size_t t = 1; t < snapshots.size(); ++t)
    if (snapshots[t].log_posterior > snapshots[best].log_posterior) best = t;
  return best;
}

DdtTree map_tree(const std::vector<Snapshot>& snapshots) {
  return parse_newick(snapshots[map_index(snapshots)].tree);
}

namespace {

// Renames leaf "v<a+1>" to "v<perm[a]+1>" in place. Only the labels change,
// so branch lengths keep their exact text.
std::string relabel_newick(const std::string& text, const std::vector<int>& perm) {
  std::string out;
  out.reserve(text.size() + 8);
  std::size_t i = 0;
  while (i < text.size()) {
    const bool label_start = text[i] == 'v' && i > 0 && (text[i - 1] == '(' || text[i - 1] == ',');
    if (!label_start) {
      out += text[i++];
      continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    const int a = end > i + 1 ? std::stoi(text.substr(i + 1, end - i - 1)) - 1 : -1;
    if (a < 0 || a >= static_cast<int>(perm.size()) || (end < text.size() && text[end] != ':'))
      throw Error("invalid_tree", "leaf label '" + text.substr(i, end - i) + "' is not a class label");
    out += "v" + std::to_string(perm[a] + 1);
    i = end;
  }
  return out;
}

}  // namespace

Snapshot permute_snapshot(const Snapshot& s, const std::vector<int>& perm) {
  const int K = static_cast<int>(perm.size());
  if (K != s.pi.size()) throw Error("dimension_mismatch", "permutation length differs from K");
  std::vector<bool> seen(K, false);
  for (int a : perm) {
    if (a < 0 || a >= K || seen[a]) throw Error("invalid_argument", "not a permutation of the class labels");
    seen[a] = true;
  }
  bool identity = true;
  for (int a = 0; a < K; ++a) identity &= perm[a] == a;
  if (identity) return s;

  Snapshot out = s;
  for (int& k : out.z) k = perm[k];
  for (int a = 0; a < K; ++a) {
    out.pi[perm[a]] = s.pi[a];
    out.theta.row(perm[a]) = s.theta.row(a);
  }
  out.tree = relabel_newick(s.tree, perm);
  return out;
}

std::vector<int> ecr_permutation(const std::vector<int>& z, const std::vector<int>& pivot, int K) {
  if (z.size() != pivot.size()) throw Error("dimension_mismatch", "allocation and pivot differ in length");
  Eigen::MatrixXd agreement = Eigen::MatrixXd::Zero(K, K);
  for (std::size_t i = 0; i < z.size(); ++i) agreement(z[i], pivot[i]) += 1.0;
  return solve_assignment_max(agreement);
}

RelabelResult ecr_relabel(const std::vector<Snapshot>& snapshots) {
  RelabelResult out;
  if (snapshots.empty()) return out;
  const auto& pivot = snapshots[map_index(snapshots)].z;
  const int K = static_cast<int>(snapshots.front().pi.size());
  for (const auto& s : snapshots) {
    auto perm = ecr_permutation(s.z, pivot, K);
    out.snapshots.push_back(permute_snapshot(s, perm));
    out.permutations.push_back(std::move(perm));
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error("invalid_argument", "quantile of no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Interval summarize_draws(const std::vector<double>& draws, double level) {
  if (draws.empty()) throw Error("invalid_argument", "no draws to summarize");
  // Deviations from the first draw keep the mean exact for constant draws.
  double shift = 0.0;
  for (double d : draws) shift += d - draws.front();
  Interval out;
  out.mean = draws.front() + shift / static_cast<double>(draws.size());
  const double tail = 0.5 * (1.0 - level);
  out.lower = quantile(draws, tail);
  out.upper = quantile(draws, 1.0 - tail);
  // Guard against rounding in the interpolation for constant draws.
  out.lower = std::min(out.lower, out.mean);
  out.upper = std::max(out.upper, out.mean);
  return out;
}

PosteriorSummary summarize(const PosteriorChain& chain, const SummaryConfig& config) {
  if (!(config.level > 0.0 && config.level < 1.0)) throw Error("invalid_argument", "credible level must be in (0, 1)");
  auto kept = apply_burnin(chain.snapshots, config.burnin);

  PosteriorSummary out;
  out.burnin = config.burnin;
  out.level = config.level;
  out.relabeled = config.relabel;
  if (config.relabel) {
    auto relabeled = ecr_relabel(kept);
    kept = std::move(relabeled.snapshots);
    out.permutations = std::move(relabeled.permutations);
  }
  out.K = static_cast<int>(kept.front().pi.size());
  out.J = static_cast<int>(kept.front().theta.cols());
  out.retained = static_cast<int>(kept.size());
  const std::size_t best = map_index(kept);
  out.map_iteration = kept[best].iteration;
  out.map_tree = kept[best].tree;

  auto collect = [&](auto&& get) {
    std::vector<double> draws;
    draws.reserve(kept.size());
    for (const auto& s : kept) draws.push_back(get(s));
    return summarize_draws(draws, config.level);
  };
  for (int k = 0; k < out.K; ++k) {
    out.pi.push_back(collect([k](const Snapshot& s) { return s.pi[k]; }));
    std::vector<Interval> row;
    for (int j = 0; j < out.J; ++j) row.push_back(collect([k, j](const Snapshot& s) { return s.theta(k, j); }));
    out.theta.push_back(std::move(row));
  }
  for (int g = 0; g < kept.front().sigma2.size(); ++g)
    out.sigma2.push_back(collect([g](const Snapshot& s) { return s.sigma2[g]; }));
  out.c = collect([](const Snapshot& s) { return s.c; });
  out.item_labels = chain.meta.item_labels;
  out.group_names = chain.meta.group_names;
  out.item_groups = chain.meta.item_groups;
  return out;
}

std::string format_summary(const PosteriorSummary& s) {
  std::ostringstream os;
  char buf[160];
  os << "Posterior summary over " << s.retained << " iterations (burn-in " << s.burnin << ", "
     << (s.relabeled ? "ECR relabeled" : "not relabeled") << ")\n";
  os << "MAP tree (iteration " << s.map_iteration << "): " << s.map_tree << "\n";
  const int pct = static_cast<int>(std::lround(s.level * 100));
  os << "Class prevalences (" << pct << "% CI):\n";
  for (int k = 0; k < s.K; ++k) {
    std::snprintf(buf, sizeof buf, "  v%d: %.3f (%.3f, %.3f)\n", k + 1, s.pi[k].mean, s.pi[k].lower, s.pi[k].upper);
    os << buf;
  }
  os << "Item response probabilities (" << pct << "% CI):\n";
  for (int j = 0; j < s.J; ++j) {
    os << "  " << (j < static_cast<int>(s.item_labels.size()) ? s.item_labels[j] : "item_" + std::to_string(j + 1));
    for (int k = 0; k < s.K; ++k) {
      const auto& c = s.theta[k][j];
      std::snprintf(buf, sizeof buf, "  %.3f (%.3f, %.3f)", c.mean, c.lower, c.upper);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

namespace {

json interval_json(const Interval& i) { return json{{"mean", i.mean}, {"lower", i.lower}, {"upper", i.upper}}; }

Interval interval_from(const json& j) {
  return Interval{j.at("mean").get<double>(), j.at("lower").get<double>(), j.at("upper").get<double>()};
}

}  // namespace

json summary_to_json(const PosteriorSummary& s) {
  json theta = json::array();
  for (const auto& row : s.theta) {
    json r = json::array();
    for (const auto& c : row) r.push_back(interval_json(c));
    theta.push_back(r);
  }
  json pi = json::array();
  for (const auto& c : s.pi) pi.push_back(interval_json(c));
  json sigma2 = json::array();
  for (const auto& c : s.sigma2) sigma2.push_back(interval_json(c));
  json perms = json::array();
  for (const auto& p : s.permutations) {
    std::vector<int> one(p);
    for (int& v : one) ++v;
    perms.push_back(one);
  }
  std::vector<std::vector<int>> groups(s.group_names.empty() ? 0 : s.group_names.size());
  for (std::size_t j = 0; j < s.item_groups.size(); ++j) {
    const auto g = static_cast<std::size_t>(s.item_groups[j]);
    if (groups.size() <= g) groups.resize(g + 1);
    groups[g].push_back(static_cast<int>(j) + 1);
  }
  return json{{"schema_version", kSchemaVersion},
              {"K", s.K},
              {"J", s.J},
              {"burnin", s.burnin},
              {"retained_iterations", s.retained},
              {"credible_level", s.level},
              {"relabeled", s.relabeled},
              {"map_iteration", s.map_iteration},
              {"map_tree", s.map_tree},
              {"class_probability", pi},
              {"item_response_probability", theta},
              {"sigma2", sigma2},
              {"c", interval_json(s.c)},
              {"permutations", perms},
              {"item_labels", s.item_labels},
              {"group_names", s.group_names},
              {"groups", groups}};
}

PosteriorSummary summary_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw Error("schema", "unsupported summary schema_version");
    PosteriorSummary s;
    s.K = j.at("K").get<int>();
    s.J = j.at("J").get<int>();
    s.burnin = j.at("burnin").get<int>();
    s.retained = j.at("retained_iterations").get<int>();
    s.level = j.at("credible_level").get<double>();
    s.relabeled = j.at("relabeled").get<bool>();
    s.map_iteration = j.at("map_iteration").get<int>();
    s.map_tree = j.at("map_tree").get<std::string>();
    for (const auto& c : j.at("class_probability")) s.pi.push_back(interval_from(c));
    for (const auto& row : j.at("item_response_probability")) {
      std::vector<Interval> r;
      for (const auto& c : row) r.push_back(interval_from(c));
      s.theta.push_back(std::move(r));
    }
    for (const auto& c : j.at("sigma2")) s.sigma2.push_back(interval_from(c));
    s.c = interval_from(j.at("c"));
    for (const auto& p : j.at("permutations")) {
      auto one = p.get<std::vector<int>>();
      for (int& v : one) --v;
      s.permutations.push_back(std::move(one));
    }
    s.item_labels = j.at("item_labels").get<std::vector<std::string>>();
    s.group_names = j.at("group_names").get<std::vector<std::string>>();
    s.item_groups.assign(s.J, 0);
    const auto groups = j.at("groups").get<std::vector<std::vector<int>>>();
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (int item : groups[g])
        if (item >= 1 && item <= s.J) s.item_groups[item - 1] = static_cast<int>(g);
    if (static_cast<int>(s.pi.size()) != s.K || static_cast<int>(s.theta.size()) != s.K)
      throw Error("schema", "summary arrays disagree with K");
    return s;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("summary.json: ") + e.what());
  }
}

}  // namespace treelcm
