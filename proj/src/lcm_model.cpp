#include "treelcm/lcm_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "treelcm/error.hpp"

namespace treelcm {

namespace {

double log_sum_exp(const Eigen::VectorXd& x) {
  const double top = x.maxCoeff();
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - top);
  return top + std::log(sum);
}

void check_model(const ResponseMatrix& data, const Eigen::MatrixXd& theta, const Eigen::VectorXd& pi) {
  if (theta.cols() != data.cols()) throw Error("dimension_mismatch", "theta has the wrong number of items");
  if (theta.rows() != pi.size()) throw Error("dimension_mismatch", "theta and pi disagree on K");
}

}  // namespace

ResponseMatrix::ResponseMatrix(int rows, int cols, std::vector<std::uint8_t> values, std::vector<std::string> row_ids,
                               std::vector<std::string> item_labels)
    : rows_(rows),
      cols_(cols),
      values_(std::move(values)),
      row_ids_(std::move(row_ids)),
      item_labels_(std::move(item_labels)) {
  if (rows < 0 || cols <= 0) throw Error("dimension_mismatch", "response matrix needs at least one column");
  if (values_.size() != static_cast<std::size_t>(rows) * cols)
    throw Error("dimension_mismatch", "response values do not fill an N x J matrix");
  for (auto v : values_)
    if (v > 1) throw Error("non_binary", "responses must be 0 or 1");
  if (row_ids_.empty())
    for (int i = 0; i < rows; ++i) row_ids_.push_back(std::to_string(i + 1));
  if (item_labels_.empty())
    for (int j = 0; j < cols; ++j) item_labels_.push_back("item_" + std::to_string(j + 1));
  if (static_cast<int>(row_ids_.size()) != rows || static_cast<int>(item_labels_.size()) != cols)
    throw Error("dimension_mismatch", "row ids or item labels do not match the matrix shape");
}

double sigmoid(double x) {
  const double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

void check_class_probability(const Eigen::VectorXd& pi) {
  if (pi.size() == 0) throw Error("invalid_argument", "class probability is empty");
  for (double p : pi)
    if (!(p >= 0.0)) throw Error("invalid_argument", "class probabilities must be nonnegative");
  if (std::abs(pi.sum() - 1.0) > 1e-12) throw Error("invalid_argument", "class probabilities must sum to 1");
}

Eigen::MatrixXd leaf_locations(const DdtTree& tree, const NodeLocations& locations) {
  const auto leaves = tree.class_leaves();
  Eigen::MatrixXd out(leaves.size(), locations.nodes.cols());
  for (std::size_t k = 0; k < leaves.size(); ++k) out.row(k) = locations.nodes.row(leaves[k]);
  return out;
}

Eigen::MatrixXd response_prob_from_locations(const Eigen::MatrixXd& leaf_locations) {
  return leaf_locations.unaryExpr([](double x) { return sigmoid(x); });
}

double loglik_complete(const ResponseMatrix& data, std::span<const int> z, const Eigen::MatrixXd& theta,
                       const Eigen::VectorXd& pi) {
  check_model(data, theta, pi);
  if (static_cast<int>(z.size()) != data.rows()) throw Error("dimension_mismatch", "one membership per row");
  const Eigen::MatrixXd clamped = theta.cwiseMax(kProbFloor).cwiseMin(1.0 - kProbFloor);
  const Eigen::MatrixXd log_yes = clamped.array().log();
  const Eigen::MatrixXd log_no = (1.0 - clamped.array()).log();
  double total = 0.0;
  for (int i = 0; i < data.rows(); ++i) {
    const int k = z[i];
    if (k < 0 || k >= pi.size()) throw Error("invalid_argument", "membership out of range");
    double row = std::log(pi[k]);
    for (int j = 0; j < data.cols(); ++j) row += data(i, j) ? log_yes(k, j) : log_no(k, j);
    total += row;
  }
  return total;
}

Eigen::VectorXd membership_log_weights(std::span<const std::uint8_t> row, const Eigen::MatrixXd& theta,
                                       const Eigen::VectorXd& pi) {
  const int classes = static_cast<int>(pi.size());
  Eigen::VectorXd w(classes);
  for (int k = 0; k < classes; ++k) {
    double acc = std::log(pi[k]);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double p = std::clamp(theta(k, static_cast<int>(j)), kProbFloor, 1.0 - kProbFloor);
      acc += row[j] ? std::log(p) : std::log1p(-p);
    }
    w[k] = acc;
  }
  return w;
}

double loglik_marginal(const ResponseMatrix& data, const Eigen::MatrixXd& theta, const Eigen::VectorXd& pi) {
  check_model(data, theta, pi);
  double total = 0.0;
  for (int i = 0; i < data.rows(); ++i) total += log_sum_exp(membership_log_weights(data.row(i), theta, pi));
  return total;
}

Eigen::VectorXd membership_posterior(std::span<const std::uint8_t> row, const Eigen::MatrixXd& theta,
                                     const Eigen::VectorXd& pi) {
  if (theta.rows() != pi.size() || theta.cols() != static_cast<int>(row.size()))
    throw Error("dimension_mismatch", "row, theta and pi disagree");
  Eigen::VectorXd w = membership_log_weights(row, theta, pi);
  const double top = w.maxCoeff();
  // Scalar exp: Eigen's vectorized exp does not map -inf to exactly 0.
  for (double& v : w) v = std::exp(v - top);
  return w / w.sum();
}

ResponseMatrix simulate_responses(const Eigen::MatrixXd& theta, const Eigen::VectorXd& pi, int rows, Rng& rng,
                                  std::vector<int>& memberships, std::vector<std::string> item_labels) {
  if (rows < 1) throw Error("invalid_argument", "N must be at least 1");
  const int items = static_cast<int>(theta.cols());
  std::vector<std::uint8_t> values(static_cast<std::size_t>(rows) * items);
  memberships.assign(rows, 0);
  const std::vector<double> weights(pi.data(), pi.data() + pi.size());
  for (int i = 0; i < rows; ++i) {
    const int k = static_cast<int>(rng.categorical(weights));
    memberships[i] = k;
    for (int j = 0; j < items; ++j) values[static_cast<std::size_t>(i) * items + j] = rng.bernoulli(theta(k, j));
  }
  return ResponseMatrix(rows, items, std::move(values), {}, std::move(item_labels));
}

SimulatedDataset simulate_lcm_given_tree(const DdtTree& tree, int rows, const Eigen::VectorXd& class_probability,
                                         const ItemGrouping& grouping, const DiffusionVariances& variances,
                                         const Eigen::VectorXd& root_location, std::uint64_t seed_parameter,
                                         std::uint64_t seed_response, std::vector<std::string> item_labels) {
  if (tree.leaf_count() != class_probability.size())
    throw Error("dimension_mismatch", "tree has " + std::to_string(tree.leaf_count()) + " leaves but " +
                                          std::to_string(class_probability.size()) + " class probabilities");
  check_class_probability(class_probability);

  SimulatedDataset out;
  out.tree = tree;
  out.pi = class_probability;
  out.seed_parameter = seed_parameter;
  out.seed_response = seed_response;
  out.locations = diffuse_locations(tree, grouping, variances, root_location, seed_parameter);
  out.theta = response_prob_from_locations(leaf_locations(tree, out.locations));
  Rng rng(seed_response);
  out.responses = simulate_responses(out.theta, out.pi, rows, rng, out.memberships, std::move(item_labels));
  return out;
}

}  // namespace treelcm
