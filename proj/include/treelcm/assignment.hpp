#pragma once

#include <Eigen/Dense>
#include <vector>

namespace treelcm {

// Exact maximum-weight perfect matching on a square score matrix (Hungarian
// method, O(n^3)). Returns col[row].
std::vector<int> solve_assignment_max(const Eigen::MatrixXd& score);

}  // namespace treelcm
