#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "blflow/errors.hpp"

namespace blflow::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRankTolerance = 1e-10;

inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

// Cholesky-backed SPD queries. Factorization failure is the definiteness
// signal; no separate eigenvalue pass.
struct SpdFactor {
  Eigen::LLT<MatrixXd> llt;
  bool positive_definite;
};

inline SpdFactor spd_factor(const MatrixXd& a) {
  SpdFactor f{Eigen::LLT<MatrixXd>(a), false};
  f.positive_definite = (f.llt.info() == Eigen::Success) &&
                        (f.llt.matrixLLT().diagonal().minCoeff() > 0.0);
  return f;
}

inline bool is_spd(const MatrixXd& a) { return spd_factor(a).positive_definite; }

inline double logdet_spd(const MatrixXd& a) {
  auto f = spd_factor(a);
  if (!f.positive_definite) throw Error("logdet of a non-SPD matrix");
  return 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
}

inline double det_spd(const MatrixXd& a) { return std::exp(logdet_spd(a)); }

inline MatrixXd inverse_spd(const MatrixXd& a) {
  auto f = spd_factor(a);
  if (!f.positive_definite) throw Error("inverse of a non-SPD matrix");
  return f.llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
}

// Induced 2-norm of a symmetric matrix.
inline double sym_norm(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double operator_norm(const MatrixXd& a) {
  return a.jacobiSvd().singularValues()(0);
}

inline double min_eigenvalue(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double condition_number_spd(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline int rank(const MatrixXd& a, double tol = kRankTolerance) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * sv(0)) ++r;
  return r;
}

// Orthonormal basis of the column span (thin, rank-revealing).
inline MatrixXd column_space_basis(const MatrixXd& a, double tol = kRankTolerance) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(0) > 0.0 && sv(i) > tol * sv(0)) ++r;
  return svd.matrixU().leftCols(r);
}

// Orthonormal basis of ker(a) as columns.
inline MatrixXd kernel_basis(const MatrixXd& a, double tol = kRankTolerance) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(0) > 0.0 && sv(i) > tol * sv(0)) ++r;
  return svd.matrixV().rightCols(a.cols() - r);
}

// dim(span(u) + span(v)); u, v hold basis columns of subspaces of the same R^n.
inline int sum_dim(const MatrixXd& u, const MatrixXd& v) {
  MatrixXd joined(u.rows(), u.cols() + v.cols());
  joined << u, v;
  return rank(joined);
}

inline int intersection_dim(const MatrixXd& u, const MatrixXd& v) {
  return static_cast<int>(u.cols() + v.cols()) - sum_dim(u, v);
}

// Orthogonal projector onto the column span; canonical representation used
// to deduplicate subspaces.
inline MatrixXd projector(const MatrixXd& basis) {
  MatrixXd q = column_space_basis(basis);
  return q * q.transpose();
}

// Fixed-order pairwise summation; deterministic regardless of how the
// entries were produced.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
  return pairwise_sum(std::span<const double>(xs));
}

}  // namespace blflow::linalg
