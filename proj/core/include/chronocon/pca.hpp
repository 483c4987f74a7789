#pragma once

#include <Eigen/Core>

namespace chronocon {

struct PcaResult {
  Eigen::MatrixXd projected;          // n x m, m <= n_components
  Eigen::VectorXd explained_variance; // fraction of total variance per component
  Eigen::MatrixXd components;         // D x m, column-major principal axes
  bool rank_deficient = false;        // fewer components than requested
};

// Mean-centered covariance eigen-decomposition. Components are ordered by
// descending eigenvalue; each component's largest-magnitude loading is made
// positive so the projection is sign-stable.
PcaResult pca_project(const Eigen::MatrixXd& data, int n_components = 2);

}  // namespace chronocon
