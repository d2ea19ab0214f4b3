#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treelcm/ddt_prior.hpp"
#include "treelcm/rng.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

// Item response probabilities are kept inside [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-12;

// N x J binary responses, row-major.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;
  ResponseMatrix(int rows, int cols, std::vector<std::uint8_t> values, std::vector<std::string> row_ids = {},
                 std::vector<std::string> item_labels = {});

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::uint8_t operator()(int i, int j) const { return values_[static_cast<std::size_t>(i) * cols_ + j]; }
  std::span<const std::uint8_t> row(int i) const {
    return {values_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }
  const std::vector<std::uint8_t>& values() const { return values_; }
  const std::vector<std::string>& row_ids() const { return row_ids_; }
  const std::vector<std::string>& item_labels() const { return item_labels_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> values_;
  std::vector<std::string> row_ids_;
  std::vector<std::string> item_labels_;
};

double sigmoid(double x);
void check_class_probability(const Eigen::VectorXd& pi);

// Leaf rows of `locations` in class order (K x J).
Eigen::MatrixXd leaf_locations(const DdtTree& tree, const NodeLocations& locations);
// Elementwise clamped sigmoid.
Eigen::MatrixXd response_prob_from_locations(const Eigen::MatrixXd& leaf_locations);

// z holds 0-based class indices.
double loglik_complete(const ResponseMatrix& data, std::span<const int> z, const Eigen::MatrixXd& theta,
                       const Eigen::VectorXd& pi);
double loglik_marginal(const ResponseMatrix& data, const Eigen::MatrixXd& theta, const Eigen::VectorXd& pi);
// Log of pi_k * prod_j Bernoulli(y_j; theta_kj) for every k, before normalizing.
Eigen::VectorXd membership_log_weights(std::span<const std::uint8_t> row, const Eigen::MatrixXd& theta,
                                       const Eigen::VectorXd& pi);
Eigen::VectorXd membership_posterior(std::span<const std::uint8_t> row, const Eigen::MatrixXd& theta,
                                     const Eigen::VectorXd& pi);

struct SimulatedDataset {
  ResponseMatrix responses;
  DdtTree tree;
  NodeLocations locations;
  Eigen::MatrixXd theta;
  Eigen::VectorXd pi;
  std::vector<int> memberships;  // 0-based
  std::uint64_t seed_parameter = 0;
  std::uint64_t seed_response = 0;
};

// Draws z_i ~ Categorical(pi) by inverse CDF, then Y_ij ~ Bernoulli(theta_{z_i j}).
ResponseMatrix simulate_responses(const Eigen::MatrixXd& theta, const Eigen::VectorXd& pi, int rows, Rng& rng,
                                  std::vector<int>& memberships, std::vector<std::string> item_labels = {});

// Node locations are diffused with seed_parameter; memberships and responses
// are drawn with seed_response.
SimulatedDataset simulate_lcm_given_tree(const DdtTree& tree, int rows, const Eigen::VectorXd& class_probability,
                                         const ItemGrouping& grouping, const DiffusionVariances& variances,
                                         const Eigen::VectorXd& root_location, std::uint64_t seed_parameter,
                                         std::uint64_t seed_response, std::vector<std::string> item_labels = {});

}  // namespace treelcm
