#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

#include "blflow/errors.hpp"
#include "blflow/extremiser.hpp"
#include "blflow/gaussian.hpp"
#include "blflow/mixture.hpp"
#include "blflow/nonlinear.hpp"
#include "blflow/quadrature.hpp"

namespace blflow::heat {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using gaussian::GaussianInput;
using gaussian::KernelFamily;

// Gaussian kernel of the flow at base point x and scale tau: branch j has
// unit-mass density tau^{-n_j} det(A_j)^{1/2} exp(-pi tau^{-2} <A_j z, z>).
struct HeatKernel {
  VectorXd base_point;
  double tau = 0.1;
  GaussianInput blocks;
  double gamma = 0.9;
  double epsilon = 0.05;

  double log_density(int j, const VectorXd& z) const {
    const auto& a = blocks.block(j);
    return -a.rows() * std::log(tau) + 0.5 * linalg::logdet_spd(a) -
           std::numbers::pi / (tau * tau) * z.dot(a * z);
  }
  double density(int j, const VectorXd& z) const { return std::exp(log_density(j, z)); }
};

struct KernelBuildReport {
  HeatKernel kernel;
  double deficit = 0.0;         // 1 - bl_g(datum, A_tau) / bl_reference
  double deficit_bound = 0.0;   // tau^alpha * (2^{alpha/2} - 1)^{-1}
  double series_constant = 0.0;  // (2^{alpha/2} - 1)^{-1}
  double bl_reference = 0.0;
  int terms = 0;
  double tail_bound = 0.0;
};

// Builds A_tau as the infinite-convolution limit of the family and checks
// the near-extremiser property of the result against the geometric-series
// deficit budget.
inline KernelBuildReport kernel_from_family(const KernelFamily& family,
                                            const datum::LinearDatum& datum_at_x,
                                            const VectorXd& x, double tau, double gamma = 0.9,
                                            double epsilon = 0.05, double bl_reference = 0.0,
                                            double n_exponent = 4.0) {
  const auto limit = gaussian::infinite_convolution_limit(family, tau, 1e-12, n_exponent);
  KernelBuildReport rep;
  rep.kernel = HeatKernel{x, tau, limit.value, gamma, epsilon};
  rep.terms = limit.terms;
  rep.tail_bound = limit.tail_bound;
  const double alpha = family.alpha();
  rep.series_constant = 1.0 / (std::pow(2.0, alpha / 2.0) - 1.0);
  rep.deficit_bound = std::pow(tau, alpha) * rep.series_constant;
  rep.bl_reference =
      bl_reference > 0.0 ? bl_reference : extremiser::bl_estimate(datum_at_x).value;
  const double blg = gaussian::bl_g(datum_at_x, limit.value);
  rep.deficit = std::max(0.0, 1.0 - blg / rep.bl_reference);
  return rep;
}

// Truncated convolution operator for one branch. The ball radius carries
// the ||dB_j|| factor so the tangent-ball inclusions hold by construction.
struct FlowOperator {
  HeatKernel kernel;
  int branch = 0;
  double kappa = 1.0;  // 1 or the enlarged 1.1 variant
  double db_norm = 1.0;
  std::optional<nonlinear::Box> admissible;  // optional z-domain restriction

  double radius() const { return kappa * std::pow(kernel.tau, kernel.gamma) * db_norm; }
};

inline FlowOperator make_flow_operator(HeatKernel kernel, int branch, double kappa = 1.0,
                                       double db_norm = 1.0) {
  if (kappa != 1.0 && kappa != 1.1)
    throw Error("truncation multiplier must be 1 or 1.1");
  return FlowOperator{std::move(kernel), branch, kappa, db_norm, std::nullopt};
}

// H f(z) = int_{|w - z| <= r} f(w) G(z - w) dw, by quadrature over the
// ball. Untruncated, the exact mixture convolution value is used instead.
inline double apply_flow(const FlowOperator& op, const mixture::GaussianMixture& f,
                         const VectorXd& z, int points = 48, bool truncated = true) {
  if (op.admissible && !op.admissible->contains(z))
    throw OutOfDomain("flow evaluated outside the admissible region");
  const MatrixXd& a = op.kernel.blocks.block(op.branch);
  if (!truncated) {
    const mixture::GaussianMixture conv = mixture::convolve(f, a, op.kernel.tau);
    return conv(z);
  }
  return quadrature::convolve_mixture_truncated(f, a, op.kernel.tau, op.radius(), z, points);
}

struct TruncationReport {
  double ratio_lower = 0.0;  // guaranteed lower bound on ball/total mass
  double ratio_upper = 1.0;  // bounding-box upper bound
  double threshold = 0.0;    // (1 + tau^epsilon)^{-1}
  bool pass = false;
};

// Ball-to-total mass of one kernel branch at radius kappa tau^gamma
// (||dB||-scaled on request). Diagonalizes A and uses one-dimensional
// gaussian tails: the union bound over eigendirections gives the lower
// bound, the bounding box the upper; in one dimension both collapse to the
// exact erf value.
inline TruncationReport truncation_mass_ratio(const HeatKernel& kernel, int branch,
                                              double kappa = 1.0, double db_norm = 1.0) {
  const MatrixXd& a = kernel.blocks.block(branch);
  const int n = static_cast<int>(a.rows());
  const double r = kappa * std::pow(kernel.tau, kernel.gamma) * db_norm;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  double tail_union = 0.0;
  double box_mass = 1.0;
  for (int i = 0; i < n; ++i) {
    const double s = std::sqrt(std::numbers::pi * es.eigenvalues()(i)) / kernel.tau;
    tail_union += std::erfc(s * r / std::sqrt(static_cast<double>(n)));
    box_mass *= std::erf(s * r);
  }
  TruncationReport rep;
  rep.ratio_upper = box_mass;
  rep.ratio_lower = n == 1 ? box_mass : std::max(0.0, 1.0 - tail_union);
  rep.threshold = 1.0 / (1.0 + std::pow(kernel.tau, kernel.epsilon));
  rep.pass = rep.ratio_lower >= rep.threshold;
  return rep;
}

struct ConvergencePoint {
  double tau = 0.0;
  double error = 0.0;
};

// |H f(z) - f(z)| along a decreasing tau sweep, one flow operator per tau.
inline std::vector<ConvergencePoint> pointwise_convergence_curve(
    const std::function<FlowOperator(double)>& op_at, const mixture::GaussianMixture& f,
    const VectorXd& z, const std::vector<double>& taus, int points = 48) {
  std::vector<ConvergencePoint> curve;
  const double reference = f(z);
  for (double tau : taus) {
    const FlowOperator op = op_at(tau);
    curve.push_back({tau, std::abs(apply_flow(op, f, z, points) - reference)});
  }
  return curve;
}

// Least-squares slope of log(error) against log(tau).
inline double empirical_order(const std::vector<ConvergencePoint>& curve) {
  std::vector<double> xs, ys;
  for (const auto& p : curve) {
    if (p.error <= 0.0) continue;
    xs.push_back(p.tau);
    ys.push_back(p.error);
  }
  if (xs.size() < 2) return 0.0;
  return extremiser::detail::loglog_fit(xs, ys).first;
}

struct RatioReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  double bound = 0.0;
  bool pass = false;
};

// Kernel ratio G(v)/G(w) for nearby points of the truncation ball, against
// the local-constancy budget exp(pi tau^{-2} ||A|| |v-w| (|v|+|w|)).
inline RatioReport local_constancy_ratio(const HeatKernel& kernel, int branch, const VectorXd& v,
                                         const VectorXd& w, double slack = 1.05) {
  const double tau = kernel.tau;
  const double r_ball = std::pow(tau, kernel.gamma);
  if ((v - w).norm() > slack * tau * tau)
    throw PreconditionViolated("|v - w| must be O(tau^2)");
  if (v.norm() > slack * (r_ball + tau * tau) || w.norm() > slack * (r_ball + tau * tau))
    throw PreconditionViolated("points must lie in the tau^gamma ball");
  const MatrixXd& a = kernel.blocks.block(branch);
  RatioReport rep;
  rep.lhs = kernel.density(branch, v);
  rep.rhs = kernel.density(branch, w);
  rep.ratio = std::exp(kernel.log_density(branch, v) - kernel.log_density(branch, w));
  const double a_norm = linalg::sym_norm(a);
  rep.bound = std::exp(std::numbers::pi / (tau * tau) * a_norm * (v - w).norm() *
                       (v.norm() + w.norm()));
  rep.pass = rep.ratio <= rep.bound * (1.0 + 1e-12);
  return rep;
}

// a_tau(x): the gaussian-input field behind the g-kernels. Realized by a
// plain function so tests can wire constant, tau-perturbed, or x-varying
// families.
struct KernelField {
  std::function<GaussianInput(const VectorXd& x, double tau)> a;
  std::function<double(const VectorXd& x)> bl_reference;  // BL(dB(x), p)
};

// Field whose value at every x is the fixed-point extremiser of dB(x).
inline KernelField extremiser_field(const nonlinear::NonlinearDatum& nd,
                                    extremiser::SearchOptions opts = {}) {
  KernelField field;
  field.a = [nd, opts](const VectorXd& x, double) {
    return extremiser::near_extremiser_search(nd.linearize(x), opts).input;
  };
  field.bl_reference = [nd, opts](const VectorXd& x) {
    return extremiser::bl_estimate(nd.linearize(x), opts).value;
  };
  return field;
}

// Both sides of the switching comparison between base points x and y:
// products of g-kernels evaluated along dB, weighted by the local BL
// constants. For linear data with a constant field the two sides agree
// exactly.
inline RatioReport switching_factor(const nonlinear::NonlinearDatum& nd, const KernelField& field,
                                    const VectorXd& x, const VectorXd& y, double tau,
                                    double gamma = 0.9, double eta = 0.05) {
  if ((x - y).norm() > std::pow(tau, gamma) * (1.0 + 1e-9))
    throw PreconditionViolated("|x - y| must be at most tau^gamma");
  const GaussianInput a_x = field.a(x, tau);
  const GaussianInput a_y = field.a(y, tau);
  const datum::LinearDatum dx = nd.linearize(x);
  const datum::LinearDatum dy = nd.linearize(y);

  auto log_side = [&](const datum::LinearDatum& d, const GaussianInput& a, const VectorXd& v) {
    double acc = 0.0;
    for (int j = 0; j < d.m(); ++j) {
      const VectorXd z = d.maps[j] * v;
      acc += d.exponents[j] * (-d.codomain_dim(j) * std::log(tau) -
                               std::numbers::pi / (tau * tau) * z.dot(a.block(j) * z));
    }
    return acc;
  };
  RatioReport rep;
  const double log_lhs = log_side(dy, a_y, x - y) - std::log(field.bl_reference(y));
  const double log_rhs = log_side(dx, a_x, y - x) - std::log(field.bl_reference(x));
  rep.lhs = std::exp(log_lhs);
  rep.rhs = std::exp(log_rhs);
  rep.ratio = std::exp(log_lhs - log_rhs);
  rep.bound = 1.0 + std::pow(tau, eta);
  rep.pass = rep.ratio <= rep.bound * (1.0 + 1e-12);
  return rep;
}

// Ratio of the flow values H_{y,tau,j} f (z) / H_{x,tau,j} f (z): only the
// discrepancy between A_tau(x) and A_tau(y) contributes in the euclidean
// case.
inline RatioReport base_switch_factor(const nonlinear::NonlinearDatum& nd,
                                      const KernelField& field, const VectorXd& x,
                                      const VectorXd& y, const VectorXd& z, double tau,
                                      const mixture::GaussianMixture& f, int branch,
                                      double gamma = 0.9, double eta = 0.6, double kappa = 1.0,
                                      int points = 48) {
  const double r_gamma = std::pow(tau, gamma);
  if ((x - y).norm() > r_gamma * (1.0 + 1e-9))
    throw PreconditionViolated("|x - y| must be at most tau^gamma");
  if ((z - nd.maps[static_cast<std::size_t>(branch)].value(x)).norm() > r_gamma * (1.0 + 1e-9))
    throw PreconditionViolated("|z - B_j(x)| must be at most tau^gamma");

  auto flow_at = [&](const VectorXd& base) {
    HeatKernel kernel{base, tau, field.a(base, tau), gamma, 0.05};
    FlowOperator op = make_flow_operator(std::move(kernel), branch, kappa,
                                         nd.map_db_norms[static_cast<std::size_t>(branch)]);
    return apply_flow(op, f, z, points);
  };
  RatioReport rep;
  rep.lhs = flow_at(y);
  rep.rhs = flow_at(x);
  rep.ratio = rep.lhs / rep.rhs;
  rep.bound = 1.0 + std::pow(tau, eta);
  rep.pass = rep.ratio <= rep.bound * (1.0 + 1e-12);
  return rep;
}

struct NormRegimeReport {
  double a_norm = 0.0;
  double a_inv_norm = 0.0;
  double det_norm = 0.0;
  double fd_da_norm = 0.0;
  double bound = 0.0;  // tau^{-epsilon}
  bool pass = false;
};

// Measured norm regime of a kernel field over sample base points:
// ||A_tau||, ||A_tau^{-1}||, |det A_tau| and the finite-difference
// derivative all stay below tau^{-epsilon}.
inline NormRegimeReport norm_regime(const KernelField& field, const std::vector<VectorXd>& xs,
                                    double tau, double epsilon, double fd_step = 1e-5) {
  NormRegimeReport rep;
  rep.bound = std::pow(tau, -epsilon);
  for (const auto& x : xs) {
    const GaussianInput a = field.a(x, tau);
    rep.a_norm = std::max(rep.a_norm, a.max_block_norm());
    rep.a_inv_norm = std::max(rep.a_inv_norm, a.inverse().max_block_norm());
    for (int j = 0; j < a.m(); ++j)
      rep.det_norm = std::max(rep.det_norm, std::abs(linalg::det_spd(a.block(j))));
    for (int k = 0; k < x.size(); ++k) {
      VectorXd xp = x, xm = x;
      xp(k) += fd_step;
      xm(k) -= fd_step;
      const GaussianInput ap = field.a(xp, tau);
      const GaussianInput am = field.a(xm, tau);
      for (int j = 0; j < a.m(); ++j)
        rep.fd_da_norm =
            std::max(rep.fd_da_norm, linalg::sym_norm(MatrixXd(ap.block(j) - am.block(j))) /
                                         (2.0 * fd_step));
    }
  }
  rep.pass = rep.a_norm <= rep.bound && rep.a_inv_norm <= rep.bound &&
             rep.det_norm <= rep.bound && rep.fd_da_norm <= rep.bound;
  return rep;
}

}  // namespace blflow::heat
