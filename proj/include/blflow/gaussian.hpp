#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "blflow/datum.hpp"
#include "blflow/errors.hpp"
#include "blflow/linalg.hpp"

namespace blflow::gaussian {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// m-tuple of SPD matrices A_j, one per codomain: the argument of the
// gaussian Brascamp-Lieb functional. Symmetrized on construction;
// definiteness enforced via Cholesky.
class GaussianInput {
 public:
  GaussianInput() = default;

  explicit GaussianInput(std::vector<MatrixXd> blocks) {
    blocks_.reserve(blocks.size());
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      MatrixXd s = linalg::symmetrize(blocks[j]);
      if ((s - blocks[j]).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff()))
        throw Error("block " + std::to_string(j) + " is not symmetric");
      if (!linalg::is_spd(s))
        throw Error("block " + std::to_string(j) + " is not positive definite");
      blocks_.push_back(std::move(s));
    }
  }

  static GaussianInput identity(const std::vector<int>& dims) {
    std::vector<MatrixXd> blocks;
    blocks.reserve(dims.size());
    for (int d : dims) blocks.push_back(MatrixXd::Identity(d, d));
    return GaussianInput(std::move(blocks));
  }

  static GaussianInput identity_for(const datum::LinearDatum& d) {
    std::vector<int> dims;
    for (int j = 0; j < d.m(); ++j) dims.push_back(d.codomain_dim(j));
    return identity(dims);
  }

  static GaussianInput scalars(const std::vector<double>& values) {
    std::vector<MatrixXd> blocks;
    for (double v : values) blocks.push_back(MatrixXd::Constant(1, 1, v));
    return GaussianInput(std::move(blocks));
  }

  int m() const { return static_cast<int>(blocks_.size()); }
  const MatrixXd& block(int j) const { return blocks_[j]; }
  const std::vector<MatrixXd>& blocks() const { return blocks_; }

  bool same_shape(const GaussianInput& other) const {
    if (m() != other.m()) return false;
    for (int j = 0; j < m(); ++j)
      if (blocks_[j].rows() != other.blocks_[j].rows()) return false;
    return true;
  }

  double max_block_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s = std::max(s, linalg::sym_norm(b));
    return s;
  }

  double max_abs_diff(const GaussianInput& other) const {
    double s = 0.0;
    for (int j = 0; j < m(); ++j) s = std::max(s, (blocks_[j] - other.blocks_[j]).cwiseAbs().maxCoeff());
    return s;
  }

  GaussianInput map_blocks(const std::function<MatrixXd(const MatrixXd&)>& f) const {
    std::vector<MatrixXd> out;
    out.reserve(blocks_.size());
    for (const auto& b : blocks_) out.push_back(f(b));
    return GaussianInput(std::move(out));
  }

  GaussianInput inverse() const {
    return map_blocks([](const MatrixXd& b) { return linalg::symmetrize(linalg::inverse_spd(b)); });
  }

  GaussianInput scaled(double c) const {
    return map_blocks([c](const MatrixXd& b) { return MatrixXd(c * b); });
  }

 private:
  std::vector<MatrixXd> blocks_;
};

// M(A) = sum_j p_j L_j^* A_j L_j, the gram matrix of the quadratic form
// picked up by the product of gaussians.
inline MatrixXd gram_matrix(const datum::LinearDatum& d, const GaussianInput& a) {
  if (a.m() != d.m()) throw ShapeMismatch("input block count differs from datum");
  MatrixXd m = MatrixXd::Zero(d.n, d.n);
  for (int j = 0; j < d.m(); ++j) {
    if (a.block(j).rows() != d.codomain_dim(j))
      throw ShapeMismatch("block " + std::to_string(j) + " does not match codomain");
    m += d.exponents[j] * d.maps[j].transpose() * a.block(j) * d.maps[j];
  }
  return linalg::symmetrize(m);
}

struct BlgBreakdown {
  double value = 0.0;
  double log_value = 0.0;
  MatrixXd gram;
};

// prod det(A_j)^{p_j/2} / det(M)^{1/2}, evaluated in log space.
inline BlgBreakdown bl_g_full(const datum::LinearDatum& d, const GaussianInput& a) {
  BlgBreakdown out;
  out.gram = gram_matrix(d, a);
  auto f = linalg::spd_factor(out.gram);
  if (!f.positive_definite) throw SingularM();
  const double logdet_m = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  if (logdet_m < std::log(1e-300)) throw SingularM();
  double log_num = 0.0;
  for (int j = 0; j < d.m(); ++j)
    log_num += 0.5 * d.exponents[j] * linalg::logdet_spd(a.block(j));
  out.log_value = log_num - 0.5 * logdet_m;
  out.value = std::exp(out.log_value);
  return out;
}

inline double bl_g(const datum::LinearDatum& d, const GaussianInput& a) {
  return bl_g_full(d, a).value;
}

// Blockwise (X^{-1} + Y^{-1})^{-1}: combines a delta1- and a delta2-near
// extremiser into a (delta1+delta2)-near extremiser.
inline GaussianInput harmonic_add(const GaussianInput& x, const GaussianInput& y) {
  if (!x.same_shape(y)) throw ShapeMismatch("harmonic_add needs matching block shapes");
  std::vector<MatrixXd> out;
  out.reserve(x.m());
  for (int j = 0; j < x.m(); ++j) {
    MatrixXd s = linalg::inverse_spd(x.block(j)) + linalg::inverse_spd(y.block(j));
    out.push_back(linalg::symmetrize(linalg::inverse_spd(s)));
  }
  return GaussianInput(std::move(out));
}

// Rescales each block to unit determinant.
inline GaussianInput normalize_det(const GaussianInput& a) {
  return a.map_blocks([](const MatrixXd& b) {
    const double logdet = linalg::logdet_spd(b);
    const double c = std::exp(-logdet / static_cast<double>(b.rows()));
    return MatrixXd(c * b);
  });
}

// Kernels carry an explicit (matrix, scale) pair: density exponent
// pi * scale^{-2} <A z, z>, covariance scale^2 A^{-1} / (2 pi). Convolution
// adds covariances, so the semigroup is exact in this representation.
struct ScaledInput {
  GaussianInput input;
  double scale = 1.0;
};

inline ScaledInput convolve_inputs(const GaussianInput& x, double tau, const GaussianInput& y,
                                   double sigma) {
  if (!x.same_shape(y)) throw ShapeMismatch("convolve_inputs needs matching block shapes");
  if (!(tau > 0.0) || !(sigma > 0.0)) throw Error("convolve_inputs needs positive scales");
  const double s2 = tau * tau + sigma * sigma;
  std::vector<MatrixXd> out;
  out.reserve(x.m());
  for (int j = 0; j < x.m(); ++j) {
    MatrixXd cov_sum = tau * tau * linalg::inverse_spd(x.block(j)) +
                       sigma * sigma * linalg::inverse_spd(y.block(j));
    out.push_back(linalg::symmetrize(s2 * linalg::inverse_spd(cov_sum)));
  }
  return ScaledInput{GaussianInput(std::move(out)), std::sqrt(s2)};
}

// tau -> gaussian input, with insert-once concurrent caching of queried
// scales.
class KernelFamily {
 public:
  KernelFamily() = default;
  KernelFamily(std::function<GaussianInput(double)> generator, double alpha)
      : generator_(std::move(generator)), alpha_(alpha) {
    if (!(alpha_ > 0.0 && alpha_ < 1.0)) throw Error("family exponent alpha must lie in (0,1)");
  }

  static KernelFamily constant(const GaussianInput& a, double alpha = 0.5) {
    return KernelFamily([a](double) { return a; }, alpha);
  }

  double alpha() const { return alpha_; }

  const GaussianInput& at(double tau) const {
    if (!(tau > 0.0)) throw Error("kernel family queried at non-positive scale");
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(tau);
    if (it == cache_.end()) it = cache_.emplace(tau, generator_(tau)).first;
    return it->second;
  }

 private:
  std::function<GaussianInput(double)> generator_;
  double alpha_ = 0.5;
  mutable std::mutex mutex_;
  mutable std::map<double, GaussianInput> cache_;
};

struct ConvolutionLimit {
  GaussianInput value;       // A_tau
  int terms = 0;             // K at termination
  double tail_bound = 0.0;   // 2^{(alpha N/2 - 1) K} tau^{-alpha N}
  bool lemma9_regime = true;  // alpha < 2/(3N)
};

// A_tau = lim_K C_K with C_K^{-1} = sum_{k<=K} 2^{-k} a(2^{-k/2} tau)^{-1}.
// Terminates when the blockwise increment of C^{-1} drops below tol; the
// reported tail bound is the Cauchy estimate of the defining series.
inline ConvolutionLimit infinite_convolution_limit(const KernelFamily& family, double tau,
                                                   double tol = 1e-12, double n_exponent = 4.0,
                                                   int max_terms = 400) {
  const double alpha = family.alpha();
  const double rate = alpha * n_exponent / 2.0 - 1.0;  // log2 of the tail ratio
  if (rate >= 0.0)
    throw NoConvergence("tail bound non-decreasing: alpha * N / 2 >= 1");

  ConvolutionLimit out;
  out.lemma9_regime = alpha < 2.0 / (3.0 * n_exponent);

  std::vector<MatrixXd> acc;  // C_K^{-1} blockwise
  double prev_increment = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= max_terms; ++k) {
    const double scale_k = std::pow(2.0, -0.5 * k) * tau;
    const GaussianInput& a_k = family.at(scale_k);
    double increment = 0.0;
    if (acc.empty()) {
      acc.reserve(a_k.m());
      for (int j = 0; j < a_k.m(); ++j) {
        MatrixXd t = std::pow(2.0, -k) * linalg::inverse_spd(a_k.block(j));
        increment = std::max(increment, t.cwiseAbs().maxCoeff());
        acc.push_back(std::move(t));
      }
    } else {
      for (int j = 0; j < a_k.m(); ++j) {
        MatrixXd t = std::pow(2.0, -k) * linalg::inverse_spd(a_k.block(j));
        increment = std::max(increment, t.cwiseAbs().maxCoeff());
        acc[j] += t;
      }
    }
    out.terms = k;
    if (k > 8 && increment > prev_increment * 1.0000001)
      throw NoConvergence("partial-convolution increments are growing");
    prev_increment = increment;
    if (k > 1 && increment < tol) break;
  }
  if (out.terms == max_terms && prev_increment >= tol)
    throw NoConvergence("partial convolution did not reach tolerance");

  out.tail_bound =
      std::pow(2.0, rate * out.terms) * std::pow(tau, -alpha * n_exponent);
  std::vector<MatrixXd> blocks;
  blocks.reserve(acc.size());
  for (auto& c_inv : acc) blocks.push_back(linalg::symmetrize(linalg::inverse_spd(c_inv)));
  out.value = GaussianInput(std::move(blocks));
  return out;
}

}  // namespace blflow::gaussian
