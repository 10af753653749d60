#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "blflow/catalog.hpp"
#include "blflow/datum.hpp"
#include "blflow/errors.hpp"
#include "blflow/gaussian.hpp"
#include "blflow/nonlinear.hpp"

namespace blflow::extremiser {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using gaussian::GaussianInput;

// Stationarity update of the bl_g formula: A_j <- (L_j M(A)^{-1} L_j^*)^{-1}.
// Fixed points satisfy A_j^{-1} = L_j M^{-1} L_j^* for every j.
inline GaussianInput fixed_point_step(const datum::LinearDatum& d, const GaussianInput& a) {
  const MatrixXd m = gaussian::gram_matrix(d, a);
  auto f = linalg::spd_factor(m);
  if (!f.positive_definite) throw SingularM();
  const MatrixXd m_inv = f.llt.solve(MatrixXd::Identity(d.n, d.n));
  std::vector<MatrixXd> blocks;
  blocks.reserve(d.m());
  for (int j = 0; j < d.m(); ++j) {
    MatrixXd target = linalg::symmetrize(d.maps[j] * m_inv * d.maps[j].transpose());
    blocks.push_back(linalg::symmetrize(linalg::inverse_spd(target)));
  }
  return GaussianInput(std::move(blocks));
}

inline double stationarity_residual(const datum::LinearDatum& d, const GaussianInput& a) {
  const MatrixXd m = gaussian::gram_matrix(d, a);
  auto f = linalg::spd_factor(m);
  if (!f.positive_definite) throw SingularM();
  const MatrixXd m_inv = f.llt.solve(MatrixXd::Identity(d.n, d.n));
  double r = 0.0;
  for (int j = 0; j < d.m(); ++j) {
    MatrixXd diff = linalg::inverse_spd(a.block(j)) -
                    linalg::symmetrize(d.maps[j] * m_inv * d.maps[j].transpose());
    r = std::max(r, linalg::sym_norm(diff));
  }
  return r;
}

struct SearchOptions {
  double delta_target = 1e-12;
  double damping = 0.5;
  int max_iter = 500;
  std::optional<GaussianInput> init;
  double blowup_condition = 1e12;
};

struct SearchResult {
  GaussianInput input;
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool blown_up = false;
  // Set when bl_g dropped by more than 1e-10 along the damped iteration;
  // monotonicity is monitored, never assumed.
  bool monotone_violation = false;
};

class MaxIterExceeded : public Error {
 public:
  explicit MaxIterExceeded(SearchResult best_so_far)
      : Error("extremiser search hit the iteration cap"), best(std::move(best_so_far)) {}
  SearchResult best;
};

// Damped fixed-point iteration A <- (1-lambda) A + lambda step(A) from the
// identity input. Growth of cond(A_j) past the blow-up threshold is the
// infeasibility diagnostic and stops the run.
inline SearchResult near_extremiser_search(const datum::LinearDatum& d,
                                           const SearchOptions& opts = {}) {
  GaussianInput a = opts.init ? *opts.init : GaussianInput::identity_for(d);
  SearchResult res;
  res.input = a;
  double prev_value = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    double value = 0.0;
    double residual = 0.0;
    GaussianInput target;
    try {
      const auto blg = gaussian::bl_g_full(d, a);
      value = blg.value;
      const MatrixXd m_inv = linalg::inverse_spd(blg.gram);
      std::vector<MatrixXd> blocks;
      blocks.reserve(d.m());
      for (int j = 0; j < d.m(); ++j) {
        MatrixXd lml = linalg::symmetrize(d.maps[j] * m_inv * d.maps[j].transpose());
        residual = std::max(residual,
                            linalg::sym_norm(MatrixXd(linalg::inverse_spd(a.block(j)) - lml)));
        blocks.push_back(linalg::symmetrize(linalg::inverse_spd(lml)));
      }
      target = GaussianInput(std::move(blocks));
    } catch (const SingularM&) {
      res.blown_up = true;
      res.residual = std::numeric_limits<double>::infinity();
      res.value = std::numeric_limits<double>::quiet_NaN();
      return res;
    }

    res.input = a;
    res.value = value;
    res.residual = residual;
    res.iterations = iter;
    if (value < prev_value - 1e-10) res.monotone_violation = true;
    prev_value = value;

    for (int j = 0; j < d.m(); ++j) {
      if (linalg::condition_number_spd(a.block(j)) > opts.blowup_condition) {
        res.blown_up = true;
        return res;
      }
    }
    if (residual < opts.delta_target) return res;
    if (iter == opts.max_iter) break;

    std::vector<MatrixXd> mixed;
    mixed.reserve(d.m());
    for (int j = 0; j < d.m(); ++j)
      mixed.push_back(linalg::symmetrize((1.0 - opts.damping) * a.block(j) +
                                         opts.damping * target.block(j)));
    a = GaussianInput(std::move(mixed));
  }
  throw MaxIterExceeded(res);
}

struct GridSpec {
  int k_max = 20;     // scalar grid 2^{k/k_div}, k in [-k_max, k_max]
  int k_div = 4;
};

// Coarse brute-force maximum of bl_g over scalar-multiple-of-identity
// blocks; the independent cross-check for the search value.
inline double diagonal_grid_max(const datum::LinearDatum& d, const GridSpec& grid = {}) {
  if (d.m() > 4) throw BudgetExceeded("diagonal grid oracle supports m <= 4");
  const int width = 2 * grid.k_max + 1;
  long combos = 1;
  for (int j = 0; j < d.m(); ++j) combos *= width;
  double best = 0.0;
  for (long flat = 0; flat < combos; ++flat) {
    long rem = flat;
    std::vector<MatrixXd> blocks;
    blocks.reserve(d.m());
    for (int j = 0; j < d.m(); ++j) {
      const int k = static_cast<int>(rem % width) - grid.k_max;
      rem /= width;
      const double t = std::pow(2.0, static_cast<double>(k) / grid.k_div);
      blocks.push_back(t * MatrixXd::Identity(d.codomain_dim(j), d.codomain_dim(j)));
    }
    try {
      best = std::max(best, gaussian::bl_g(d, GaussianInput(std::move(blocks))));
    } catch (const SingularM&) {
    }
  }
  return best;
}

struct BlEstimate {
  double value = 0.0;         // max of the two routes
  double search_value = 0.0;
  double grid_value = 0.0;
  SearchResult search;
};

// True BL is unknown for non-simple data; the estimate carries both the
// fixed-point value and the grid value so reports keep honest error bars.
inline BlEstimate bl_estimate(const datum::LinearDatum& d, const SearchOptions& opts = {},
                              const GridSpec& grid = {}) {
  BlEstimate est;
  est.search = near_extremiser_search(d, opts);
  est.search_value = est.search.blown_up ? 0.0 : est.search.value;
  est.grid_value = diagonal_grid_max(d, grid);
  est.value = std::max(est.search_value, est.grid_value);
  return est;
}

// Parametrized family of linear data over a parameter box; the domain of
// the regularized near-extremiser field.
struct DatumFamily {
  nonlinear::Box param_box;
  std::function<datum::LinearDatum(const VectorXd&)> at;
  // Optional closed-form constant; falls back to bl_estimate when absent.
  std::function<double(const VectorXd&)> bl_exact;

  datum::LinearDatum operator()(const VectorXd& t) const { return at(t); }
};

inline DatumFamily hoelder_segment_family(double t0, double t1) {
  DatumFamily fam;
  fam.param_box.lo = VectorXd::Constant(1, t0);
  fam.param_box.hi = VectorXd::Constant(1, t1);
  fam.at = [](const VectorXd& t) { return catalog::hoelder_segment(t(0)); };
  fam.bl_exact = [](const VectorXd& t) { return catalog::hoelder_segment_bl(t(0)); };
  return fam;
}

namespace detail {

inline double bump(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - u * u));
}

inline double bump_derivative(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  const double d = 1.0 - u * u;
  return bump(u) * (-2.0 * u / (d * d));
}

// Least-squares line through (log x, log y); returns (slope, intercept).
inline std::pair<double, double> loglog_fit(const std::vector<double>& xs,
                                            const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(xs[i]);
    const double ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  return {slope, intercept};
}

}  // namespace detail

struct FieldPoint {
  GaussianInput value;       // unit-determinant blend (the field value)
  GaussianInput blend_raw;   // harmonic blend before determinant scaling
  double deficit_budget = 0.0;  // sum of per-active-cell transfer deficits
  double bl_reference = 0.0;    // BL estimate (or exact value) at the query
  int active_cells = 0;
};

// Regularized near-extremiser field over a datum family: per-node searches
// on the lattice with datum-space spacing (delta/100)^{1/theta}, bump
// partition of unity on cubes of width (delta/10)^{1/theta}, harmonic
// blend, unit-determinant scaling. Nodes are computed lazily and cached
// with insert-once semantics; a node's value depends only on its lattice
// index, so evaluation order cannot change results.
class YDeltaField {
 public:
  YDeltaField(DatumFamily family, double delta, double theta, SearchOptions search_opts = {})
      : family_(std::move(family)), delta_(delta), theta_(theta), search_opts_(search_opts) {
    if (!(delta_ > 0.0 && delta_ < 1.0)) throw Error("delta must lie in (0,1)");
    if (!(theta_ > 0.0 && theta_ < 1.0)) throw Error("theta must lie in (0,1)");
    spacing_datum_ = std::pow(delta_ / 100.0, 1.0 / theta_);
    width_datum_ = std::pow(delta_ / 10.0, 1.0 / theta_);
    lipschitz_ = measure_lipschitz();
    spacing_param_ = spacing_datum_ / lipschitz_;
    width_param_ = width_datum_ / lipschitz_;
    if (width_param_ < spacing_param_)
      throw GridTooCoarse("cubes narrower than the node spacing");
    // Cubes of width w centred on a lattice of spacing h cover everything
    // when w >= h; the remaining failure mode is a parameter box too wide
    // for the lattice index range.
    for (int i = 0; i < family_.param_box.dim(); ++i) {
      if ((family_.param_box.hi(i) - family_.param_box.lo(i)) / spacing_param_ > 4e18)
        throw GridTooCoarse("parameter box spans too many lattice cells");
    }
  }

  double delta() const { return delta_; }
  double theta() const { return theta_; }
  double node_spacing_datum() const { return spacing_datum_; }
  double cube_width_datum() const { return width_datum_; }
  double node_spacing_param() const { return spacing_param_; }
  double cube_width_param() const { return width_param_; }
  double lipschitz() const { return lipschitz_; }
  const DatumFamily& family() const { return family_; }
  std::size_t nodes_computed() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return node_cache_.size();
  }

  double bl_reference(const VectorXd& t) const {
    if (family_.bl_exact) return family_.bl_exact(t);
    return bl_estimate(family_.at(t), search_opts_).value;
  }

  FieldPoint evaluate(const VectorXd& t) const {
    const int dim = family_.param_box.dim();
    const double half = 0.5 * width_param_;
    std::vector<std::vector<long>> active = active_indices(t);
    if (active.empty()) throw GridTooCoarse("no cube covers the query point");

    const datum::LinearDatum here = family_.at(t);
    const double bl_ref = bl_reference(t);

    FieldPoint out;
    out.bl_reference = bl_ref;
    out.active_cells = static_cast<int>(active.size());

    std::vector<double> weights(active.size());
    double total = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      double w = 1.0;
      for (int k = 0; k < dim; ++k)
        w *= detail::bump((t(k) - active[i][static_cast<std::size_t>(k)] * spacing_param_) / half);
      weights[i] = w;
      total += w;
    }
    if (!(total > 0.0)) throw GridTooCoarse("partition of unity vanishes at the query point");

    std::vector<MatrixXd> acc;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const double rho = weights[i] / total;
      if (rho == 0.0) continue;
      const Node& node = node_at(active[i]);
      if (acc.empty()) {
        for (int j = 0; j < node.value.m(); ++j)
          acc.push_back(MatrixXd(rho * node.inverse.block(j)));
      } else {
        for (int j = 0; j < node.value.m(); ++j) acc[j] += rho * node.inverse.block(j);
      }
      // Transfer deficit of this node's extremiser at the query datum; the
      // harmonic-addition chain degrades by at most the sum of these.
      const double blg = gaussian::bl_g(here, node.value);
      out.deficit_budget += std::max(0.0, 1.0 - blg / bl_ref);
    }
    std::vector<MatrixXd> blend;
    blend.reserve(acc.size());
    for (auto& b : acc) blend.push_back(linalg::symmetrize(linalg::inverse_spd(b)));
    out.blend_raw = GaussianInput(std::move(blend));
    out.value = gaussian::normalize_det(out.blend_raw);
    return out;
  }

  // Measured sup |grad rho| (datum-space units) at a query point, via
  // central differences; checked against the delta^{-1/theta} scaling.
  double partition_gradient(const VectorXd& t) const {
    const int dim = family_.param_box.dim();
    const double half = 0.5 * width_param_;
    const double h = width_param_ * 1e-4;
    std::vector<std::vector<long>> active = active_indices(t);
    double sup = 0.0;
    auto rho_all = [&](const VectorXd& q) {
      std::vector<double> ws(active.size());
      double tot = 0.0;
      for (std::size_t i = 0; i < active.size(); ++i) {
        double w = 1.0;
        for (int k = 0; k < dim; ++k)
          w *= detail::bump((q(k) - active[i][static_cast<std::size_t>(k)] * spacing_param_) /
                            half);
        ws[i] = w;
        tot += w;
      }
      for (auto& w : ws) w /= tot;
      return ws;
    };
    for (int k = 0; k < dim; ++k) {
      VectorXd tp = t, tm = t;
      tp(k) += h;
      tm(k) -= h;
      const auto wp = rho_all(tp);
      const auto wm = rho_all(tm);
      for (std::size_t i = 0; i < active.size(); ++i)
        sup = std::max(sup, std::abs(wp[i] - wm[i]) / (2.0 * h) / lipschitz_);
    }
    return sup;
  }

 private:
  struct Node {
    GaussianInput value;    // Y^0 at the node
    GaussianInput inverse;
    double deficit = 0.0;   // 1 - blg/BL at the node itself
  };

  double measure_lipschitz() const {
    const int dim = family_.param_box.dim();
    double lip = 0.0;
    const int samples = 5;
    for (int s = 0; s < samples; ++s) {
      VectorXd t(dim);
      for (int k = 0; k < dim; ++k) {
        const double u = samples == 1 ? 0.5 : static_cast<double>(s) / (samples - 1);
        t(k) = family_.param_box.lo(k) + u * (family_.param_box.hi(k) - family_.param_box.lo(k));
      }
      const double h = 1e-6 * std::max(1.0, t.cwiseAbs().maxCoeff());
      for (int k = 0; k < dim; ++k) {
        VectorXd tp = t, tm = t;
        tp(k) += h;
        tm(k) -= h;
        lip = std::max(lip, datum::datum_distance(family_.at(tp), family_.at(tm)) / (2.0 * h));
      }
    }
    return lip > 0.0 ? lip : 1.0;
  }

  std::vector<std::vector<long>> active_indices(const VectorXd& t) const {
    const int dim = family_.param_box.dim();
    const double half = 0.5 * width_param_;
    std::vector<long> lo(dim), hi(dim);
    for (int k = 0; k < dim; ++k) {
      lo[static_cast<std::size_t>(k)] = static_cast<long>(std::ceil((t(k) - half) / spacing_param_));
      hi[static_cast<std::size_t>(k)] = static_cast<long>(std::floor((t(k) + half) / spacing_param_));
    }
    std::vector<std::vector<long>> out;
    std::vector<long> idx(lo.begin(), lo.end());
    while (true) {
      out.push_back(idx);
      int k = 0;
      for (; k < dim; ++k) {
        if (++idx[static_cast<std::size_t>(k)] <= hi[static_cast<std::size_t>(k)]) break;
        idx[static_cast<std::size_t>(k)] = lo[static_cast<std::size_t>(k)];
      }
      if (k == dim) break;
    }
    return out;
  }

  const Node& node_at(const std::vector<long>& index) const {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = node_cache_.find(index);
      if (it != node_cache_.end()) return it->second;
    }
    VectorXd t(family_.param_box.dim());
    for (int k = 0; k < family_.param_box.dim(); ++k)
      t(k) = index[static_cast<std::size_t>(k)] * spacing_param_;
    const datum::LinearDatum d = family_.at(t);
    const SearchResult sr = near_extremiser_search(d, search_opts_);
    if (sr.blown_up) throw Error("field node search blew up; datum likely infeasible");
    Node node;
    node.value = sr.input;
    node.inverse = sr.input.inverse();
    node.deficit = std::max(0.0, 1.0 - sr.value / bl_reference(t));
    std::lock_guard<std::mutex> lock(mutex_);
    return node_cache_.emplace(index, std::move(node)).first->second;
  }

  DatumFamily family_;
  double delta_;
  double theta_;
  SearchOptions search_opts_;
  double spacing_datum_ = 0.0;
  double width_datum_ = 0.0;
  double spacing_param_ = 0.0;
  double width_param_ = 0.0;
  double lipschitz_ = 1.0;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<long>, Node> node_cache_;
};

struct C1Estimate {
  double sup_value_norm = 0.0;
  double sup_inverse_norm = 0.0;
  double sup_derivative_norm = 0.0;
};

// Sup norms of the field and its central finite-difference derivative over
// a probe grid. fd_step must stay below a tenth of the node spacing.
inline C1Estimate estimate_c1_norm(const YDeltaField& field, int probes = 25,
                                   double fd_step = -1.0) {
  const auto& box = field.family().param_box;
  const int dim = box.dim();
  if (fd_step <= 0.0) fd_step = field.node_spacing_param() / 10.0;
  if (fd_step > field.node_spacing_param() / 10.0 + 1e-30)
    throw Error("fd_step must be below a tenth of the node spacing");
  C1Estimate est;
  for (int s = 0; s < probes; ++s) {
    VectorXd t(dim);
    for (int k = 0; k < dim; ++k) {
      const double u = probes == 1 ? 0.5 : static_cast<double>(s) / (probes - 1);
      t(k) = box.lo(k) + u * (box.hi(k) - box.lo(k));
    }
    const FieldPoint p = field.evaluate(t);
    est.sup_value_norm = std::max(est.sup_value_norm, p.value.max_block_norm());
    est.sup_inverse_norm = std::max(est.sup_inverse_norm, p.value.inverse().max_block_norm());
    for (int k = 0; k < dim; ++k) {
      VectorXd tp = t, tm = t;
      tp(k) += fd_step;
      tm(k) -= fd_step;
      const FieldPoint fp = field.evaluate(tp);
      const FieldPoint fm = field.evaluate(tm);
      double dnorm = 0.0;
      for (int j = 0; j < fp.value.m(); ++j)
        dnorm = std::max(dnorm, linalg::sym_norm(MatrixXd(fp.value.block(j) - fm.value.block(j))) /
                                    (2.0 * fd_step) / field.lipschitz());
      est.sup_derivative_norm = std::max(est.sup_derivative_norm, dnorm);
    }
  }
  return est;
}

// Log-log regression of the field's C1 size against 1/delta over a sweep;
// the empirical stand-in for the non-constructive exponent N.
inline double fit_n_exponent(const DatumFamily& family, const std::vector<double>& deltas,
                             double theta, int probes = 15, SearchOptions opts = {}) {
  std::vector<double> xs, ys;
  for (double delta : deltas) {
    YDeltaField field(family, delta, theta, opts);
    const C1Estimate est = estimate_c1_norm(field, probes);
    const double norm = std::max({est.sup_value_norm, est.sup_inverse_norm,
                                  est.sup_derivative_norm, 1.0});
    xs.push_back(1.0 / delta);
    ys.push_back(norm);
  }
  return detail::loglog_fit(xs, ys).first;
}

struct HolderFit {
  double theta_fit = 0.0;
  double constant = 0.0;
  int pairs_used = 0;
};

// Fits |BL(L) - BL(L')| <= C |L - L'|^theta over sampled datum pairs.
// Identical pairs carry no information and are excluded.
inline HolderFit holder_probe(const std::vector<std::pair<datum::LinearDatum, double>>& samples) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double dx = datum::datum_distance(samples[i].first, samples[j].first);
      const double dy = std::abs(samples[i].second - samples[j].second);
      if (dx < 1e-14 || dy < 1e-14) continue;
      xs.push_back(dx);
      ys.push_back(dy);
    }
  }
  if (xs.size() < 20) throw InsufficientPairs(static_cast<int>(xs.size()));
  const auto [slope, intercept] = detail::loglog_fit(xs, ys);
  HolderFit fit;
  fit.theta_fit = slope;
  fit.pairs_used = static_cast<int>(xs.size());
  // C chosen so the bound actually majorizes every sampled pair.
  double c = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    c = std::max(c, ys[i] / std::pow(xs[i], slope));
  fit.constant = std::max(c, std::exp(intercept));
  return fit;
}

}  // namespace blflow::extremiser
