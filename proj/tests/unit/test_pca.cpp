#include <doctest.h>

#include <random>

#include "chronocon/pca.hpp"

using namespace chronocon;

TEST_CASE("pca: colinear 3-D data has one dominant component") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  Eigen::MatrixXd data(40, 3);
  const Eigen::Vector3d dir(1.0, -2.0, 0.5);
  for (int i = 0; i < 40; ++i) data.row(i) = (uni(rng) * dir).transpose();
  const auto r = pca_project(data, 2);
  CHECK(r.rank_deficient);  // rank 1 < 2 requested
  REQUIRE(r.explained_variance.size() == 1);
  CHECK(r.explained_variance[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca: isotropic gaussian spreads variance evenly") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int dim = 5;
  Eigen::MatrixXd data(20000, dim);
  for (int i = 0; i < data.rows(); ++i)
    for (int j = 0; j < dim; ++j) data(i, j) = gauss(rng);
  const auto r = pca_project(data, dim);
  for (int c = 0; c < dim; ++c)
    CHECK(r.explained_variance[c] == doctest::Approx(1.0 / dim).epsilon(0.08));
}

TEST_CASE("pca: projecting 2-D data preserves pairwise distances") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd data(30, 2);
  for (int i = 0; i < 30; ++i) {
    data(i, 0) = gauss(rng);
    data(i, 1) = 0.3 * data(i, 0) + gauss(rng);
  }
  const auto r = pca_project(data, 2);
  REQUIRE(r.projected.cols() == 2);
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) {
      const double orig = (data.row(i) - data.row(j)).norm();
      const double proj = (r.projected.row(i) - r.projected.row(j)).norm();
      CHECK(proj == doctest::Approx(orig).epsilon(1e-9));
    }
}

TEST_CASE("pca: components ordered by eigenvalue with positive peak loading") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd data(5000, 3);
  for (int i = 0; i < data.rows(); ++i) {
    data(i, 0) = 3.0 * gauss(rng);
    data(i, 1) = 1.0 * gauss(rng);
    data(i, 2) = 0.2 * gauss(rng);
  }
  const auto r = pca_project(data, 3);
  CHECK(r.explained_variance[0] > r.explained_variance[1]);
  CHECK(r.explained_variance[1] > r.explained_variance[2]);
  for (int c = 0; c < 3; ++c) {
    Eigen::Index peak;
    r.components.col(c).cwiseAbs().maxCoeff(&peak);
    CHECK(r.components(peak, c) > 0.0);
  }
}

TEST_CASE("pca: argument validation") {
  Eigen::MatrixXd one_row(1, 3);
  one_row << 1, 2, 3;
  CHECK_THROWS(pca_project(one_row, 2));
  Eigen::MatrixXd ok(3, 2);
  ok << 1, 2, 3, 4, 5, 6;
  CHECK_THROWS(pca_project(ok, 0));
}
