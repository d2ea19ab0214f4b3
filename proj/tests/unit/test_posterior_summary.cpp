#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "treelcm/error.hpp"
#include "treelcm/posterior_summary.hpp"
#include "treelcm/rng.hpp"

using namespace treelcm;

namespace {

const std::string kTree = to_newick(parse_newick("((v1:0.5,v2:0.5):0.3,v3:0.8):0.2;"));

// An aligned K = 3 chain: every iteration shares the same allocation up to a
// few flipped rows, and class profiles are well separated.
std::vector<Snapshot> aligned_chain(int length, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Snapshot> chain;
  for (int t = 0; t < length; ++t) {
    Snapshot s;
    s.iteration = t + 1;
    s.tree = kTree;
    s.theta = Eigen::MatrixXd(3, 4);
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 4; ++j) s.theta(k, j) = 0.1 + 0.3 * k + 0.01 * rng.uniform();
    s.pi = Eigen::Vector3d(0.2 + 0.01 * rng.uniform(), 0.3, 0.0);
    s.pi[2] = 1.0 - s.pi[0] - s.pi[1];
    s.sigma2 = Eigen::Vector2d(1.0 + rng.uniform(), 0.5);
    s.c = 1.0 + rng.uniform();
    for (int i = 0; i < 30; ++i) s.z.push_back(i % 3);
    s.z[t % 30] = (s.z[t % 30] + 1) % 3;  // one disagreement per iteration
    s.log_posterior = -100.0 - rng.uniform();
    chain.push_back(s);
  }
  return chain;
}

bool same(const Snapshot& a, const Snapshot& b) {
  return a.iteration == b.iteration && a.tree == b.tree && a.theta == b.theta && a.pi == b.pi &&
         a.sigma2 == b.sigma2 && a.c == b.c && a.z == b.z && a.log_posterior == b.log_posterior;
}

std::vector<int> identity(int K) {
  std::vector<int> p(K);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

std::vector<int> inverse(const std::vector<int>& p) {
  std::vector<int> q(p.size());
  for (std::size_t a = 0; a < p.size(); ++a) q[p[a]] = static_cast<int>(a);
  return q;
}

PosteriorChain as_chain(std::vector<Snapshot> snapshots) {
  PosteriorChain c;
  c.snapshots = std::move(snapshots);
  return c;
}

}  // namespace

TEST_CASE("apply_burnin") {
  const auto chain = aligned_chain(100, 1);
  const auto kept = apply_burnin(chain, 50);
  CHECK(kept.size() == 50);
  CHECK(kept.front().iteration == 51);
  CHECK(kept.back().iteration == 100);
  const auto all = apply_burnin(chain, 0);
  REQUIRE(all.size() == 100);
  for (int t = 0; t < 100; ++t) CHECK(same(all[t], chain[t]));
  CHECK_THROWS_AS(apply_burnin(chain, 100), Error);
  CHECK_THROWS_AS(apply_burnin(chain, -1), Error);
}

TEST_CASE("ECR on an aligned chain applies identity permutations") {
  const auto chain = aligned_chain(40, 2);
  const auto r = ecr_relabel(chain);
  for (const auto& p : r.permutations) CHECK(p == identity(3));
  for (std::size_t t = 0; t < chain.size(); ++t) CHECK(same(r.snapshots[t], chain[t]));
}

TEST_CASE("ECR recovers the inverse of a known permutation") {
  const auto chain = aligned_chain(40, 3);
  for (const std::vector<int>& rho : {std::vector<int>{1, 2, 0}, std::vector<int>{2, 1, 0}}) {
    std::vector<Snapshot> scrambled;
    // The MAP iteration keeps its labels so the pivot equals the aligned one.
    const std::size_t best = map_index(chain);
    for (std::size_t t = 0; t < chain.size(); ++t)
      scrambled.push_back(t == best ? chain[t] : permute_snapshot(chain[t], rho));
    const auto r = ecr_relabel(scrambled);
    for (std::size_t t = 0; t < chain.size(); ++t) {
      CHECK(r.permutations[t] == (t == best ? identity(3) : inverse(rho)));
      CHECK(same(r.snapshots[t], chain[t]));
    }
  }
}

TEST_CASE("ECR on the K = 3 toy agreement matrix swaps classes 2 and 3") {
  // Agreement [[5,0,0],[0,0,5],[0,5,0]] between z and the pivot.
  std::vector<int> z, pivot;
  for (int i = 0; i < 5; ++i) {
    z.push_back(0), pivot.push_back(0);
    z.push_back(1), pivot.push_back(2);
    z.push_back(2), pivot.push_back(1);
  }
  // Oracle: exhaustive search over the six permutations.
  std::vector<int> p = identity(3), best;
  int best_score = -1;
  do {
    int score = 0;
    for (std::size_t i = 0; i < z.size(); ++i) score += p[z[i]] == pivot[i];
    if (score > best_score) best_score = score, best = p;
  } while (std::next_permutation(p.begin(), p.end()));
  CHECK(best == std::vector<int>{0, 2, 1});
  CHECK(ecr_permutation(z, pivot, 3) == best);
}

TEST_CASE("ECR is idempotent and preserves log posteriors bit for bit") {
  auto chain = aligned_chain(50, 4);
  Rng rng(5);
  for (auto& s : chain) {
    std::vector<int> rho = identity(3);
    for (int i = 2; i > 0; --i) std::swap(rho[i], rho[rng.uniform_index(i + 1)]);
    s = permute_snapshot(s, rho);
  }
  const auto once = ecr_relabel(chain);
  for (std::size_t t = 0; t < chain.size(); ++t) {
    CHECK(once.snapshots[t].log_posterior == chain[t].log_posterior);
    CHECK(std::abs(once.snapshots[t].pi.sum() - chain[t].pi.sum()) < 1e-15);
  }
  const auto twice = ecr_relabel(once.snapshots);
  for (std::size_t t = 0; t < chain.size(); ++t) {
    CHECK(twice.permutations[t] == identity(3));
    CHECK(same(twice.snapshots[t], once.snapshots[t]));
  }
}

TEST_CASE("permuting a snapshot relabels the tree leaves") {
  auto s = aligned_chain(1, 6)[0];
  const auto p = permute_snapshot(s, {1, 2, 0});
  // Labels change in place; lengths keep their exact text.
  CHECK(p.tree == "((v2:0.5,v3:0.5):0.3,v1:0.8):0.2;");
  CHECK(parse_newick(p.tree) == parse_newick("(v1:0.8,(v2:0.5,v3:0.5):0.3):0.2;"));
  CHECK_THROWS_AS(permute_snapshot(s, {1, 0}), Error);
  CHECK(p.pi[1] == s.pi[0]);
  CHECK(p.theta.row(2) == s.theta.row(1));
  CHECK(same(permute_snapshot(p, {2, 0, 1}), s));
}

TEST_CASE("MAP tree selection") {
  auto chain = aligned_chain(12, 7);
  SUBCASE("a chain of one") {
    const std::vector<Snapshot> one{chain[0]};
    CHECK(map_index(one) == 0);
    CHECK(to_newick(map_tree(one)) == chain[0].tree);
  }
  SUBCASE("injected maximum at iteration 7") {
    chain[6].log_posterior = 10.0;
    chain[6].tree = to_newick(parse_newick("((v1:0.4,v3:0.4):0.4,v2:0.8):0.2;"));
    CHECK(map_index(chain) == 6);
    CHECK(to_newick(map_tree(chain)) == chain[6].tree);
  }
  SUBCASE("ties go to the earlier iteration") {
    chain[3].log_posterior = chain[8].log_posterior = 5.0;
    chain[8].tree = to_newick(parse_newick("((v2:0.4,v3:0.4):0.4,v1:0.8):0.2;"));
    CHECK(map_index(chain) == 3);
    CHECK(to_newick(map_tree(chain)) == chain[3].tree);
  }
}

TEST_CASE("a constant chain has degenerate intervals") {
  std::vector<Snapshot> chain(20, aligned_chain(1, 8)[0]);
  for (int t = 0; t < 20; ++t) chain[t].iteration = t + 1;
  const auto s = summarize(as_chain(chain), SummaryConfig{});
  auto check = [](const Interval& i) {
    CHECK(i.lower == i.mean);
    CHECK(i.upper == i.mean);
  };
  for (const auto& i : s.pi) check(i);
  for (const auto& row : s.theta)
    for (const auto& i : row) check(i);
  for (const auto& i : s.sigma2) check(i);
  check(s.c);
}

TEST_CASE("ten theta draws: mean and inclusive-interpolation quantiles") {
  std::vector<double> draws;
  for (int i = 1; i <= 10; ++i) draws.push_back(0.1 * i);
  // Oracle: h = (n - 1) p = 9 * 0.025 = 0.225 -> 0.1 + 0.225 * 0.1; 9 * 0.975 = 8.775.
  const auto i = summarize_draws(draws, 0.95);
  CHECK(i.mean == doctest::Approx(0.55).epsilon(1e-14));
  CHECK(i.lower == doctest::Approx(0.1225).epsilon(1e-12));
  CHECK(i.upper == doctest::Approx(0.9775).epsilon(1e-12));
  CHECK(quantile(draws, 0.0) == 0.1);
  CHECK(quantile(draws, 1.0) == doctest::Approx(1.0));
  CHECK(quantile(draws, 0.5) == doctest::Approx(0.55));

  // The same cell inside a chain.
  auto chain = aligned_chain(10, 9);
  for (int t = 0; t < 10; ++t) chain[t].theta(1, 2) = draws[9 - t];
  SummaryConfig config;
  config.relabel = false;
  const auto s = summarize(as_chain(chain), config);
  CHECK(s.theta[1][2].mean == doctest::Approx(0.55));
  CHECK(s.theta[1][2].lower == doctest::Approx(0.1225));
  CHECK(s.theta[1][2].upper == doctest::Approx(0.9775));
}

TEST_CASE("full-sized summary covers the retained iterations") {
  auto chain = aligned_chain(100, 10);
  SummaryConfig config;
  config.burnin = 50;
  const auto s = summarize(as_chain(chain), config);
  CHECK(s.retained == 50);
  CHECK(s.permutations.size() == 50);
  CHECK(s.relabeled);
  double total = 0.0;
  for (const auto& i : s.pi) {
    CHECK(i.lower <= i.mean);
    CHECK(i.mean <= i.upper);
    total += i.mean;
  }
  CHECK(std::abs(total - 1.0) < 1e-6);
  for (const auto& p : s.permutations) {
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == identity(3));
  }
  CHECK_THROWS_AS(summarize(as_chain(chain), SummaryConfig{0, true, 1.0, true}), Error);
}

TEST_CASE("90% intervals nest inside 95% intervals") {
  const auto chain = as_chain(aligned_chain(200, 11));
  SummaryConfig narrow;
  narrow.level = 0.9;
  const auto a = summarize(chain, narrow);
  const auto b = summarize(chain, SummaryConfig{});
  for (int k = 0; k < 3; ++k) {
    CHECK(b.pi[k].lower <= a.pi[k].lower);
    CHECK(a.pi[k].upper <= b.pi[k].upper);
    for (int j = 0; j < 4; ++j) {
      CHECK(b.theta[k][j].lower <= a.theta[k][j].lower);
      CHECK(a.theta[k][j].upper <= b.theta[k][j].upper);
    }
  }
  CHECK(b.c.lower <= a.c.lower);
  CHECK(a.c.upper <= b.c.upper);
}

TEST_CASE("summaries are equivariant under a fixed relabeling") {
  const auto chain = aligned_chain(60, 12);
  const std::vector<int> rho{2, 0, 1};
  std::vector<Snapshot> moved;
  for (const auto& s : chain) moved.push_back(permute_snapshot(s, rho));
  SummaryConfig config;
  config.relabel = false;
  const auto a = summarize(as_chain(chain), config);
  const auto b = summarize(as_chain(moved), config);
  for (int k = 0; k < 3; ++k) {
    CHECK(b.pi[rho[k]].mean == a.pi[k].mean);
    CHECK(b.pi[rho[k]].lower == a.pi[k].lower);
    CHECK(b.pi[rho[k]].upper == a.pi[k].upper);
    for (int j = 0; j < 4; ++j) CHECK(b.theta[rho[k]][j].mean == a.theta[k][j].mean);
  }
  CHECK(parse_newick(b.map_tree) == parse_newick(a.map_tree).relabeled({"v1", "v2", "v3"}, {"v3", "v1", "v2"}));
}

TEST_CASE("summary JSON round trip") {
  PosteriorChain chain = as_chain(aligned_chain(30, 13));
  chain.meta.item_labels = {"a", "b", "c", "d"};
  chain.meta.group_names = {"G1", "G2"};
  chain.meta.item_groups = {0, 1, 1, 0};
  SummaryConfig config;
  config.burnin = 10;
  const auto s = summarize(chain, config);
  const auto j = summary_to_json(s);
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("groups") == nlohmann::json::parse("[[1,4],[2,3]]"));
  const auto back = summary_from_json(nlohmann::json::parse(j.dump()));
  CHECK(summary_to_json(back) == j);
  CHECK(back.item_groups == chain.meta.item_groups);
  auto bad = j;
  bad.erase("class_probability");
  CHECK_THROWS_AS(summary_from_json(bad), Error);
}

TEST_CASE("format_summary lists prevalences and items") {
  PosteriorChain chain = as_chain(aligned_chain(10, 14));
  chain.meta.item_labels = {"dairy_1", "b", "c", "d"};
  const auto text = format_summary(summarize(chain, SummaryConfig{}));
  CHECK(text.find("over 10 iterations") != std::string::npos);
  CHECK(text.find("  v3: ") != std::string::npos);
  CHECK(text.find("dairy_1") != std::string::npos);
}
