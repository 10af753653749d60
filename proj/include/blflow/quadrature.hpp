#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <vector>

#include "blflow/datum.hpp"
#include "blflow/errors.hpp"
#include "blflow/linalg.hpp"
#include "blflow/mixture.hpp"
#include "blflow/nonlinear.hpp"
#include "blflow/parallel.hpp"

namespace blflow::quadrature {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Rule1D {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// Gauss-Legendre nodes by Newton iteration on the Legendre recurrence.
inline Rule1D gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, Rule1D> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
  }
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  std::lock_guard<std::mutex> lock(mu);
  cache[n] = rule;
  return rule;
}

enum class Method { tensor, monte_carlo };

struct QuadratureConfig {
  int points_per_axis = 64;
  double radius_multiplier = 8.0;  // box half-width in dominating std devs
  Method method = Method::tensor;
  long mc_samples = 20000;
  std::uint64_t seed = 1;
  int jobs = 1;
  long max_points = 1 << 24;

  void validate() const {
    if (method == Method::tensor && points_per_axis < 16)
      throw ConfigInvalid("tensor quadrature needs points_per_axis >= 16");
    if (method == Method::monte_carlo && mc_samples < 10000)
      throw ConfigInvalid("monte carlo needs mc_samples >= 10^4");
  }
};

// Tensor-product Gauss-Legendre over an axis-aligned box. Cells are
// evaluated into indexed slots (possibly in parallel) and reduced with a
// fixed-order pairwise sum, so the result does not depend on the worker
// count.
inline double integrate_box(const nonlinear::Box& box, int points_per_axis,
                            const std::function<double(const VectorXd&)>& fn, int jobs = 1,
                            long max_points = 1 << 24) {
  const int n = box.dim();
  const Rule1D rule = gauss_legendre(points_per_axis);
  long total = 1;
  for (int i = 0; i < n; ++i) {
    total *= points_per_axis;
    if (total > max_points) throw BudgetExceeded("tensor grid exceeds the point budget");
  }
  const VectorXd mid = box.center();
  const VectorXd half = 0.5 * box.widths();
  double jacobian = 1.0;
  for (int i = 0; i < n; ++i) jacobian *= half(i);

  std::vector<double> cells = parallel::indexed_map<double>(
      static_cast<std::size_t>(total), jobs, [&](std::size_t flat) {
        long rem = static_cast<long>(flat);
        VectorXd x(n);
        double w = 1.0;
        for (int i = 0; i < n; ++i) {
          const int k = static_cast<int>(rem % points_per_axis);
          rem /= points_per_axis;
          x(i) = mid(i) + half(i) * rule.nodes[k];
          w *= rule.weights[k];
        }
        return w * fn(x);
      });
  return jacobian * linalg::pairwise_sum(cells);
}

struct McResult {
  double value = 0.0;
  double std_error = 0.0;
};

inline McResult integrate_box_mc(const nonlinear::Box& box, long samples, std::uint64_t seed,
                                 const std::function<double(const VectorXd&)>& fn) {
  const int n = box.dim();
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double volume = 1.0;
  for (int i = 0; i < n; ++i) volume *= box.hi(i) - box.lo(i);
  std::vector<double> vals(static_cast<std::size_t>(samples));
  for (long s = 0; s < samples; ++s) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = box.lo(i) + ud(eng) * (box.hi(i) - box.lo(i));
    vals[static_cast<std::size_t>(s)] = fn(x);
  }
  const double mean = linalg::pairwise_sum(vals) / static_cast<double>(samples);
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(samples - 1);
  McResult r;
  r.value = volume * mean;
  r.std_error = volume * std::sqrt(var / static_cast<double>(samples));
  return r;
}

// Quadrature over the euclidean ball. Smooth coordinates per dimension:
// interval (n=1), polar with periodic trapezoid in angle (n=2), spherical
// (n=3).
inline double integrate_ball(const VectorXd& center, double radius,
                             const std::function<double(const VectorXd&)>& fn,
                             int points = 48) {
  const int n = static_cast<int>(center.size());
  const Rule1D rule = gauss_legendre(points);
  if (n == 1) {
    double s = 0.0;
    for (int i = 0; i < points; ++i) {
      VectorXd x(1);
      x(0) = center(0) + radius * rule.nodes[i];
      s += rule.weights[i] * fn(x);
    }
    return radius * s;
  }
  if (n == 2) {
    const int n_phi = 2 * points;
    std::vector<double> ring(static_cast<std::size_t>(points) * n_phi);
    for (int i = 0; i < points; ++i) {
      const double r = radius * 0.5 * (rule.nodes[i] + 1.0);
      const double wr = rule.weights[i] * 0.5 * radius * r;
      for (int k = 0; k < n_phi; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / n_phi;
        VectorXd x(2);
        x(0) = center(0) + r * std::cos(phi);
        x(1) = center(1) + r * std::sin(phi);
        ring[static_cast<std::size_t>(i) * n_phi + k] =
            wr * fn(x) * (2.0 * std::numbers::pi / n_phi);
      }
    }
    return linalg::pairwise_sum(ring);
  }
  if (n == 3) {
    const int n_phi = 2 * points;
    std::vector<double> cells;
    cells.reserve(static_cast<std::size_t>(points) * points * n_phi);
    for (int i = 0; i < points; ++i) {
      const double r = radius * 0.5 * (rule.nodes[i] + 1.0);
      const double wr = rule.weights[i] * 0.5 * radius * r * r;
      for (int j = 0; j < points; ++j) {
        const double ct = rule.nodes[j];  // cos(theta)
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        const double wt = rule.weights[j];
        for (int k = 0; k < n_phi; ++k) {
          const double phi = 2.0 * std::numbers::pi * k / n_phi;
          VectorXd x(3);
          x(0) = center(0) + r * st * std::cos(phi);
          x(1) = center(1) + r * st * std::sin(phi);
          x(2) = center(2) + r * ct;
          cells.push_back(wr * wt * fn(x) * (2.0 * std::numbers::pi / n_phi));
        }
      }
    }
    return linalg::pairwise_sum(cells);
  }
  throw BudgetExceeded("ball quadrature supports n <= 3");
}

namespace detail {

// Box on which the integrand prod f_j(L_j x)^{p_j} lives, sized from the
// dominating gaussian: D = sum p_j lambda_min,j L_j^T L_j gives the decay,
// the radius covers `mult` standard deviations plus the center spread.
inline nonlinear::Box integrand_box(const datum::LinearDatum& d,
                                    const std::vector<mixture::GaussianMixture>& fs,
                                    double mult) {
  MatrixXd decay = MatrixXd::Zero(d.n, d.n);
  double center_spread = 0.0;
  for (int j = 0; j < d.m(); ++j) {
    if (d.exponents[j] == 0.0) continue;
    double max_eig = 0.0;
    for (const auto& t : fs[j].terms) {
      max_eig = std::max(max_eig, linalg::sym_norm(t.cov));
      center_spread = std::max(center_spread, t.center.norm());
    }
    decay += d.exponents[j] / max_eig * d.maps[j].transpose() * d.maps[j];
  }
  const double lam = linalg::min_eigenvalue(linalg::symmetrize(decay));
  if (!(lam > 0.0)) throw Error("integrand has a flat direction; datum likely infeasible");
  const double radius = center_spread + mult / std::sqrt(lam);
  return nonlinear::Box::cube(d.n, -radius, radius);
}

inline std::function<double(const VectorXd&)> product_integrand(
    const datum::LinearDatum& d, const std::vector<mixture::MixtureEvaluator>& evals) {
  return [&d, &evals](const VectorXd& x) {
    double prod = 1.0;
    for (int j = 0; j < d.m(); ++j) {
      const double p = d.exponents[j];
      if (p == 0.0) continue;  // 0^0 = 1 convention: the factor drops
      const double v = evals[static_cast<std::size_t>(j)](d.maps[j] * x);
      if (v <= 0.0) return 0.0;
      prod *= p == 1.0 ? v : std::pow(v, p);
    }
    return prod;
  };
}

}  // namespace detail

struct FunctionalValue {
  double value = 0.0;
  double error_estimate = 0.0;
  double numerator = 0.0;
  double std_error = 0.0;  // monte carlo only
};

// The Brascamp-Lieb functional: numerator by quadrature over the
// dominating-gaussian box, denominator masses in closed form. Error
// estimate from grid refinement.
inline FunctionalValue bl_functional_numeric(const datum::LinearDatum& d,
                                             const std::vector<mixture::GaussianMixture>& fs,
                                             const QuadratureConfig& cfg = {}) {
  cfg.validate();
  if (d.n > 3) throw BudgetExceeded("functional quadrature supports n <= 3");
  if (static_cast<int>(fs.size()) != d.m()) throw ShapeMismatch("one mixture per map required");
  if (!datum::check_scaling(d).holds) throw ScalingViolated();

  std::vector<mixture::MixtureEvaluator> evals;
  evals.reserve(fs.size());
  for (const auto& f : fs) evals.emplace_back(f);
  const auto fn = detail::product_integrand(d, evals);
  const nonlinear::Box box = detail::integrand_box(d, fs, cfg.radius_multiplier);

  FunctionalValue out;
  if (cfg.method == Method::tensor) {
    const double coarse = integrate_box(box, cfg.points_per_axis, fn, cfg.jobs, cfg.max_points);
    const int refined_pts = cfg.points_per_axis + cfg.points_per_axis / 2;
    const double fine = integrate_box(box, refined_pts, fn, cfg.jobs, cfg.max_points);
    out.numerator = fine;
    out.error_estimate = std::abs(fine - coarse);
  } else {
    const McResult mc = integrate_box_mc(box, cfg.mc_samples, cfg.seed, fn);
    out.numerator = mc.value;
    out.std_error = mc.std_error;
    out.error_estimate = mc.std_error;
  }

  double log_denominator = 0.0;
  for (int j = 0; j < d.m(); ++j) {
    if (d.exponents[j] == 0.0) continue;
    log_denominator += d.exponents[j] * std::log(fs[j].mass());
  }
  const double denom = std::exp(log_denominator);
  out.value = out.numerator / denom;
  out.error_estimate /= denom;
  out.std_error /= denom;
  return out;
}

// Truncated convolution (f * G chi_ball)(z) with the kernel
// exp(-pi scale^{-2} <A w, w>) normalized to unit mass, integrated over
// |w| <= radius.
inline double convolve_mixture_truncated(const mixture::GaussianMixture& f, const MatrixXd& a,
                                         double scale, double radius, const VectorXd& z,
                                         int points = 48) {
  mixture::MixtureEvaluator eval(f);
  const int nj = static_cast<int>(z.size());
  const double log_norm =
      -nj * std::log(scale) + 0.5 * linalg::logdet_spd(a);  // unit-mass prefactor
  const MatrixXd a_scaled = a / (scale * scale);
  return integrate_ball(
      VectorXd::Zero(nj), radius,
      [&](const VectorXd& w) {
        return eval(z - w) * std::exp(log_norm - std::numbers::pi * w.dot(a_scaled * w));
      },
      points);
}

// prod f_j(B_j(x))^{p_j} over the datum box.
inline FunctionalValue integrate_product_nonlinear(const nonlinear::NonlinearDatum& nd,
                                                   const std::vector<mixture::GaussianMixture>& fs,
                                                   const QuadratureConfig& cfg = {}) {
  cfg.validate();
  if (nd.n() > 3) throw BudgetExceeded("nonlinear quadrature supports n <= 3");
  if (static_cast<int>(fs.size()) != nd.m()) throw ShapeMismatch("one mixture per map required");
  std::vector<mixture::MixtureEvaluator> evals;
  evals.reserve(fs.size());
  for (const auto& f : fs) evals.emplace_back(f);
  auto fn = [&](const VectorXd& x) {
    double prod = 1.0;
    for (int j = 0; j < nd.m(); ++j) {
      const double p = nd.exponents[j];
      if (p == 0.0) continue;
      const double v = evals[static_cast<std::size_t>(j)](nd.maps[j].value(x));
      if (v <= 0.0) return 0.0;
      prod *= p == 1.0 ? v : std::pow(v, p);
    }
    return prod;
  };
  FunctionalValue out;
  const double coarse = integrate_box(nd.domain, cfg.points_per_axis, fn, cfg.jobs, cfg.max_points);
  const double fine = integrate_box(nd.domain, cfg.points_per_axis + cfg.points_per_axis / 2, fn,
                                    cfg.jobs, cfg.max_points);
  out.value = out.numerator = fine;
  out.error_estimate = std::abs(fine - coarse);
  return out;
}

}  // namespace blflow::quadrature
