#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "blflow/errors.hpp"
#include "blflow/gaussian.hpp"
#include "blflow/linalg.hpp"

namespace blflow::mixture {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Nonnegative combination of gaussian bumps. Each term is
// weight * N(x; center, cov) with N the unit-mass density, so the term
// weight IS its mass and convolving with a unit-mass gaussian kernel adds
// covariances and leaves weights untouched.
struct GaussianMixture {
  struct Term {
    double weight;
    VectorXd center;
    MatrixXd cov;
  };
  std::vector<Term> terms;

  int dim() const { return terms.empty() ? 0 : static_cast<int>(terms[0].center.size()); }

  double mass() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.weight;
    return s;
  }

  double operator()(const VectorXd& x) const {
    double s = 0.0;
    for (const auto& t : terms) {
      const VectorXd d = x - t.center;
      auto f = linalg::spd_factor(t.cov);
      const double q = d.dot(f.llt.solve(d));
      const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
      s += t.weight *
           std::exp(-0.5 * q - 0.5 * logdet - 0.5 * dim() * std::log(2.0 * std::numbers::pi));
    }
    return s;
  }
};

// Precomputed evaluator; the hot path in every quadrature loop.
class MixtureEvaluator {
 public:
  explicit MixtureEvaluator(const GaussianMixture& f) {
    for (const auto& t : f.terms) {
      Entry e;
      e.center = t.center;
      e.precision = linalg::inverse_spd(t.cov);
      const double logdet = linalg::logdet_spd(t.cov);
      e.log_factor = std::log(t.weight) - 0.5 * logdet -
                     0.5 * t.center.size() * std::log(2.0 * std::numbers::pi);
      entries_.push_back(std::move(e));
    }
  }

  double operator()(const VectorXd& x) const {
    double s = 0.0;
    for (const auto& e : entries_) {
      const VectorXd d = x - e.center;
      s += std::exp(e.log_factor - 0.5 * d.dot(e.precision * d));
    }
    return s;
  }

 private:
  struct Entry {
    VectorXd center;
    MatrixXd precision;
    double log_factor;
  };
  std::vector<Entry> entries_;
};

inline GaussianMixture validate_mixture(GaussianMixture f) {
  if (f.terms.empty()) throw Error("mixture needs at least one term");
  bool positive = false;
  for (std::size_t i = 0; i < f.terms.size(); ++i) {
    auto& t = f.terms[i];
    if (t.weight < 0.0) throw Error("mixture weight " + std::to_string(i) + " is negative");
    positive = positive || t.weight > 0.0;
    if (t.cov.rows() != t.center.size()) throw ShapeMismatch("term covariance shape mismatch");
    t.cov = linalg::symmetrize(t.cov);
    if (!linalg::is_spd(t.cov))
      throw Error("mixture covariance " + std::to_string(i) + " is not positive definite");
  }
  if (!positive) throw Error("mixture needs a strictly positive weight");
  return f;
}

// Unit-mass gaussian with density proportional to exp(-pi <A x, x>):
// covariance A^{-1} / (2 pi).
inline GaussianMixture from_input_block(const MatrixXd& a) {
  GaussianMixture f;
  f.terms.push_back({1.0, VectorXd::Zero(a.rows()),
                     linalg::symmetrize(linalg::inverse_spd(a) / (2.0 * std::numbers::pi))});
  return f;
}

inline std::vector<GaussianMixture> from_input(const gaussian::GaussianInput& a) {
  std::vector<GaussianMixture> out;
  out.reserve(a.m());
  for (int j = 0; j < a.m(); ++j) out.push_back(from_input_block(a.block(j)));
  return out;
}

// Covariance of the kernel exp(-pi scale^{-2} <A z, z>), unit-mass
// normalized.
inline MatrixXd kernel_covariance(const MatrixXd& a, double scale) {
  return linalg::symmetrize(scale * scale * linalg::inverse_spd(a) / (2.0 * std::numbers::pi));
}

// Exact convolution with a unit-mass gaussian kernel.
inline GaussianMixture convolve(const GaussianMixture& f, const MatrixXd& kernel_matrix,
                                double scale) {
  const MatrixXd s = kernel_covariance(kernel_matrix, scale);
  GaussianMixture out = f;
  for (auto& t : out.terms) t.cov = linalg::symmetrize(t.cov + s);
  return out;
}

// f(c x) as a mixture; used by the scale-invariance properties.
inline GaussianMixture rescale_argument(const GaussianMixture& f, double c) {
  if (!(c > 0.0)) throw Error("rescale_argument needs c > 0");
  GaussianMixture out = f;
  const double w = std::pow(c, -f.dim());
  for (auto& t : out.terms) {
    t.weight *= w;
    t.center /= c;
    t.cov = linalg::symmetrize(t.cov / (c * c));
  }
  return out;
}

inline GaussianMixture scale_weights(const GaussianMixture& f, double c) {
  GaussianMixture out = f;
  for (auto& t : out.terms) t.weight *= c;
  return out;
}

}  // namespace blflow::mixture
