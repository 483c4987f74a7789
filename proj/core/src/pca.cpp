#include "chronocon/pca.hpp"

#include <Eigen/Dense>
#include <stdexcept>

namespace chronocon {

PcaResult pca_project(const Eigen::MatrixXd& data, int n_components) {
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();
  if (n_components < 1) throw std::invalid_argument("pca_project: n_components must be >= 1");
  if (n < n_components)
    throw std::invalid_argument("pca_project: need at least n_components samples");

  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("pca_project: eigen-decomposition failed");

  // SelfAdjointEigenSolver sorts ascending; take eigenpairs from the back.
  const Eigen::VectorXd evals = solver.eigenvalues();
  const double total = std::max(evals.cwiseMax(0.0).sum(), 0.0);
  const double rank_tol = evals.cwiseAbs().maxCoeff() * 1e-12;

  int rank = 0;
  for (Eigen::Index i = 0; i < dim; ++i)
    if (evals[i] > rank_tol) ++rank;
  const int m = std::min(n_components, std::max(rank, 0));

  PcaResult out;
  out.rank_deficient = m < n_components;
  out.components = Eigen::MatrixXd(dim, m);
  out.explained_variance = Eigen::VectorXd(m);
  for (int c = 0; c < m; ++c) {
    const Eigen::Index src = dim - 1 - c;  // descending eigenvalue order
    Eigen::VectorXd axis = solver.eigenvectors().col(src);
    Eigen::Index peak = 0;
    axis.cwiseAbs().maxCoeff(&peak);
    if (axis[peak] < 0) axis = -axis;
    out.components.col(c) = axis;
    out.explained_variance[c] = total > 0 ? evals[src] / total : 0.0;
  }
  out.projected = centered * out.components;
  return out;
}

}  // namespace chronocon
