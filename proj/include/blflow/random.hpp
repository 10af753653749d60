#pragma once

#include <Eigen/Dense>
#include <random>

#include "blflow/linalg.hpp"

namespace blflow::rnd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Engine = std::mt19937_64;

inline VectorXd gaussian_vector(Engine& eng, int n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(eng);
  return v;
}

inline MatrixXd gaussian_matrix(Engine& eng, int rows, int cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = nd(eng);
  return m;
}

inline MatrixXd orthogonal_matrix(Engine& eng, int n) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian_matrix(eng, n, n));
  MatrixXd q = qr.householderQ();
  // Fix the sign convention so the draw is reproducible across BLAS paths.
  MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i)
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  return q;
}

// SPD draw with eigenvalues log-uniform in [lo, hi].
inline MatrixXd spd_matrix(Engine& eng, int n, double lo = 0.5, double hi = 2.0) {
  std::uniform_real_distribution<double> ud(std::log(lo), std::log(hi));
  VectorXd eigs(n);
  for (int i = 0; i < n; ++i) eigs(i) = std::exp(ud(eng));
  MatrixXd q = orthogonal_matrix(eng, n);
  return linalg::symmetrize(q * eigs.asDiagonal() * q.transpose());
}

// Orthonormal basis of a random d-dimensional subspace of R^n.
inline MatrixXd subspace_basis(Engine& eng, int n, int d) {
  MatrixXd g = gaussian_matrix(eng, n, d);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, d);
  return q;
}

}  // namespace blflow::rnd
