#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "treelcm/error.hpp"
#include "treelcm/lcm_model.hpp"

using namespace treelcm;

namespace {

ResponseMatrix random_responses(int rows, int cols, Rng& rng) {
  std::vector<std::uint8_t> v;
  for (int i = 0; i < rows * cols; ++i) v.push_back(rng.bernoulli(0.5));
  return ResponseMatrix(rows, cols, v);
}

Eigen::MatrixXd random_theta(int K, int J, Rng& rng) {
  Eigen::MatrixXd t(K, J);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < J; ++j) t(k, j) = 0.05 + 0.9 * rng.uniform();
  return t;
}

Eigen::VectorXd random_pi(int K, Rng& rng) {
  const auto d = rng.dirichlet(std::vector<double>(K, 1.0));
  return Eigen::Map<const Eigen::VectorXd>(d.data(), K);
}

// Direct product of Bernoulli terms for one row and class, in probability space.
double row_likelihood(const ResponseMatrix& y, int i, const Eigen::MatrixXd& theta, int k) {
  double p = 1.0;
  for (int j = 0; j < y.cols(); ++j) p *= y(i, j) ? theta(k, j) : 1.0 - theta(k, j);
  return p;
}

DdtTree single_leaf() { return DdtTree({TreeNode{-1, {-1, -1}, 1.0, "v1"}}, 0); }

}  // namespace

TEST_CASE("response probabilities from locations") {
  Eigen::MatrixXd eta(1, 3);
  eta << 0.0, 40.0, std::log(3.0);
  const auto theta = response_prob_from_locations(eta);
  CHECK(theta(0, 0) == 0.5);
  CHECK(theta(0, 1) <= 1.0 - 1e-12);
  CHECK(theta(0, 1) >= 1.0 - 2e-12);
  CHECK(theta(0, 2) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(sigmoid(-40.0) >= 1e-12);
}

TEST_CASE("complete-data log likelihood") {
  SUBCASE("single cell") {
    const ResponseMatrix y(1, 1, {1});
    const std::vector<int> z{0};
    CHECK(loglik_complete(y, z, Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Ones(1)) ==
          doctest::Approx(std::log(0.5)));
  }
  SUBCASE("class permutation symmetry") {
    Rng rng(1);
    const auto y = random_responses(6, 4, rng);
    const auto theta = random_theta(3, 4, rng);
    const auto pi = random_pi(3, rng);
    std::vector<int> z{0, 1, 2, 2, 1, 0};
    const std::vector<int> perm{2, 0, 1};
    Eigen::MatrixXd theta_p(3, 4);
    Eigen::VectorXd pi_p(3);
    for (int k = 0; k < 3; ++k) {
      theta_p.row(perm[k]) = theta.row(k);
      pi_p[perm[k]] = pi[k];
    }
    std::vector<int> z_p;
    for (int k : z) z_p.push_back(perm[k]);
    CHECK(loglik_complete(y, z_p, theta_p, pi_p) == doctest::Approx(loglik_complete(y, z, theta, pi)).epsilon(1e-14));
  }
  SUBCASE("matches the direct product on random 5 x 3 data") {
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
      const auto y = random_responses(5, 3, rng);
      const auto theta = random_theta(2, 3, rng);
      const auto pi = random_pi(2, rng);
      std::vector<int> z;
      double direct = 0.0;
      for (int i = 0; i < 5; ++i) {
        z.push_back(static_cast<int>(rng.uniform_index(2)));
        direct += std::log(pi[z.back()] * row_likelihood(y, i, theta, z.back()));
      }
      CHECK(loglik_complete(y, z, theta, pi) == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("marginal log likelihood") {
  SUBCASE("K = 1 equals the complete-data likelihood") {
    Rng rng(3);
    const auto y = random_responses(7, 5, rng);
    const auto theta = random_theta(1, 5, rng);
    const std::vector<int> z(7, 0);
    CHECK(loglik_marginal(y, theta, Eigen::VectorXd::Ones(1)) ==
          doctest::Approx(loglik_complete(y, z, theta, Eigen::VectorXd::Ones(1))).epsilon(1e-14));
  }
  SUBCASE("identical profiles collapse to one class") {
    Rng rng(4);
    const auto y = random_responses(7, 5, rng);
    const auto one = random_theta(1, 5, rng);
    const Eigen::MatrixXd theta = one.replicate(3, 1);
    const std::vector<int> z(7, 0);
    const double single = loglik_complete(y, z, one, Eigen::VectorXd::Ones(1));
    CHECK(loglik_marginal(y, theta, random_pi(3, rng)) == doctest::Approx(single).epsilon(1e-13));
  }
  SUBCASE("matches enumeration over all K^N assignments") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
      const auto y = random_responses(5, 3, rng);
      const auto theta = random_theta(2, 3, rng);
      const auto pi = random_pi(2, rng);
      double total = 0.0;
      for (int mask = 0; mask < 32; ++mask) {
        std::vector<int> z;
        for (int i = 0; i < 5; ++i) z.push_back((mask >> i) & 1);
        total += std::exp(loglik_complete(y, z, theta, pi));
      }
      CHECK(std::abs(loglik_marginal(y, theta, pi) - std::log(total)) < 1e-12);
    }
  }
}

TEST_CASE("membership posterior") {
  SUBCASE("equal profiles give the prior") {
    Rng rng(6);
    const auto y = random_responses(1, 4, rng);
    const Eigen::MatrixXd theta = random_theta(1, 4, rng).replicate(3, 1);
    const auto pi = random_pi(3, rng);
    const auto post = membership_posterior(y.row(0), theta, pi);
    for (int k = 0; k < 3; ++k) CHECK(post[k] == doctest::Approx(pi[k]).epsilon(1e-13));
  }
  SUBCASE("degenerate prior") {
    Rng rng(7);
    const auto y = random_responses(1, 4, rng);
    const auto post = membership_posterior(y.row(0), random_theta(3, 4, rng), Eigen::Vector3d(1.0, 0.0, 0.0));
    CHECK(post[0] == 1.0);
    CHECK(post[1] == 0.0);
    CHECK(post[2] == 0.0);
  }
  SUBCASE("matches normalized direct products") {
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
      const auto y = random_responses(1, 4, rng);
      const auto theta = random_theta(3, 4, rng);
      const auto pi = random_pi(3, rng);
      Eigen::Vector3d direct;
      for (int k = 0; k < 3; ++k) direct[k] = pi[k] * row_likelihood(y, 0, theta, k);
      direct /= direct.sum();
      const auto post = membership_posterior(y.row(0), theta, pi);
      CHECK(std::abs(post.sum() - 1.0) < 1e-12);
      for (int k = 0; k < 3; ++k) CHECK(post[k] == doctest::Approx(direct[k]).epsilon(1e-12));
    }
  }
  SUBCASE("invariant to a common likelihood factor") {
    // Adding an item on which every class agrees multiplies all likelihoods equally.
    Rng rng(9);
    const auto theta = random_theta(3, 4, rng);
    Eigen::MatrixXd wider(3, 5);
    wider << theta, Eigen::Vector3d::Constant(0.3);
    const auto pi = random_pi(3, rng);
    const ResponseMatrix y(1, 5, {1, 0, 1, 1, 1});
    const ResponseMatrix y4(1, 4, {1, 0, 1, 1});
    const auto a = membership_posterior(y.row(0), wider, pi);
    const auto b = membership_posterior(y4.row(0), theta, pi);
    for (int k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-13));
  }
}

TEST_CASE("response matrix validation") {
  CHECK_THROWS_AS(ResponseMatrix(2, 2, {0, 1, 2, 0}), Error);
  CHECK_THROWS_AS(ResponseMatrix(2, 2, {0, 1, 1}), Error);
  const ResponseMatrix y(2, 2, {0, 1, 1, 0});
  CHECK(y.row_ids() == std::vector<std::string>{"1", "2"});
  CHECK(y.item_labels() == std::vector<std::string>{"item_1", "item_2"});
}

TEST_CASE("class probability validation") {
  CHECK_NOTHROW(check_class_probability(Eigen::Vector2d(0.25, 0.75)));
  CHECK_THROWS_AS(check_class_probability(Eigen::Vector2d(0.25, 0.8)), Error);
  CHECK_THROWS_AS(check_class_probability(Eigen::Vector2d(-0.25, 1.25)), Error);
}

TEST_CASE("simulate_lcm_given_tree on the full-sized configuration") {
  const DdtTree tree = parse_newick("(((v1:0.35,v2:0.35):0.25,v3:0.6):0.2,((v4:0.3,v5:0.3):0.35,v6:0.65):0.15):0.2;");
  std::vector<int> groups;
  for (int g = 0, sizes[] = {11, 6, 12, 12, 14, 8, 15}; g < 7; ++g) groups.insert(groups.end(), sizes[g], g);
  const ItemGrouping grouping(groups);
  Eigen::VectorXd pi(6);
  pi << 0.12, 0.18, 0.2, 0.15, 0.2, 0.15;
  Eigen::VectorXd var(7);
  var << 0.6, 1.2, 0.9, 0.8, 1.5, 0.7, 1.0;
  const auto sim = simulate_lcm_given_tree(tree, 496, pi, grouping, var, Eigen::VectorXd::Zero(78), 1, 1);
  CHECK(sim.responses.rows() == 496);
  CHECK(sim.responses.cols() == 78);
  CHECK(sim.theta.rows() == 6);
  CHECK(sim.memberships.size() == 496);
  for (int k : sim.memberships) CHECK((k >= 0 && k < 6));
  // theta is the sigmoid of the leaf locations.
  const auto leaves = tree.class_leaves();
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 78; ++j) CHECK(sim.theta(k, j) == sigmoid(sim.locations.nodes(leaves[k], j)));

  SUBCASE("bit-reproducible") {
    const auto again = simulate_lcm_given_tree(tree, 496, pi, grouping, var, Eigen::VectorXd::Zero(78), 1, 1);
    CHECK(again.responses.values() == sim.responses.values());
    CHECK(again.theta == sim.theta);
  }
  SUBCASE("seed_response changes Y but not theta; seed_parameter changes theta") {
    const auto other_y = simulate_lcm_given_tree(tree, 496, pi, grouping, var, Eigen::VectorXd::Zero(78), 1, 2);
    CHECK(other_y.theta == sim.theta);
    CHECK(other_y.responses.values() != sim.responses.values());
    const auto other_theta = simulate_lcm_given_tree(tree, 496, pi, grouping, var, Eigen::VectorXd::Zero(78), 2, 1);
    CHECK(other_theta.theta != sim.theta);
  }
  SUBCASE("leaf count must match class probability") {
    CHECK_THROWS_AS(simulate_lcm_given_tree(tree, 10, Eigen::Vector2d(0.5, 0.5), grouping, var,
                                            Eigen::VectorXd::Zero(78), 1, 1),
                    Error);
  }
}

TEST_CASE("degenerate class probability puts every row in that class") {
  const DdtTree tree = parse_newick("((v1:0.5,v2:0.5):0.5,v3:1.0):0;");
  const auto sim = simulate_lcm_given_tree(tree, 200, Eigen::Vector3d(0.0, 1.0, 0.0), ItemGrouping({0, 0}),
                                           Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(2), 3, 4);
  for (int k : sim.memberships) CHECK(k == 1);
}

TEST_CASE("column means match theta for a single class") {
  const int N = 100000;
  const auto sim = simulate_lcm_given_tree(single_leaf(), N, Eigen::VectorXd::Ones(1), ItemGrouping({0, 0, 0, 0}),
                                           Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(4), 5, 6);
  for (int j = 0; j < 4; ++j) {
    double sum = 0.0;
    for (int i = 0; i < N; ++i) sum += sim.responses(i, j);
    const double p = sim.theta(0, j);
    const double se = std::sqrt(p * (1.0 - p) / N);
    CHECK(std::abs(sum / N - p) < 3.0 * se);
  }
}
