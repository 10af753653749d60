#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "blflow/datum.hpp"
#include "blflow/errors.hpp"

namespace blflow::nonlinear {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Axis-aligned box in R^n.
struct Box {
  VectorXd lo;
  VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  VectorXd center() const { return 0.5 * (lo + hi); }
  VectorXd widths() const { return hi - lo; }
  bool contains(const VectorXd& x, double slack = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (x(i) < lo(i) - slack || x(i) > hi(i) + slack) return false;
    return true;
  }
  Box inflated(double r) const {
    Box b = *this;
    b.lo.array() -= r;
    b.hi.array() += r;
    return b;
  }
  static Box cube(int n, double lo, double hi) {
    Box b;
    b.lo = VectorXd::Constant(n, lo);
    b.hi = VectorXd::Constant(n, hi);
    return b;
  }
};

// Multivariate polynomial, terms (coefficient, multi-index). Exact
// jacobians come from differentiating the monomials, which keeps
// user-defined maps on the same footing as the built-in catalog.
struct Polynomial {
  struct Term {
    double coeff;
    std::vector<int> powers;  // one exponent per variable
  };
  std::vector<Term> terms;

  double eval(const VectorXd& x) const {
    double s = 0.0;
    for (const auto& t : terms) {
      double v = t.coeff;
      for (std::size_t i = 0; i < t.powers.size(); ++i)
        for (int k = 0; k < t.powers[i]; ++k) v *= x(static_cast<int>(i));
      s += v;
    }
    return s;
  }

  Polynomial derivative(int var) const {
    Polynomial d;
    for (const auto& t : terms) {
      if (static_cast<std::size_t>(var) >= t.powers.size() || t.powers[var] == 0) continue;
      Term dt = t;
      dt.coeff *= t.powers[var];
      dt.powers[var] -= 1;
      d.terms.push_back(std::move(dt));
    }
    return d;
  }
};

// B_j : R^n -> R^{n_j}, one polynomial per output coordinate.
struct PolynomialMap {
  int n = 0;
  std::vector<Polynomial> components;
  std::vector<std::vector<Polynomial>> jacobian_rows;  // derivative table

  static PolynomialMap of(int n, std::vector<Polynomial> components) {
    PolynomialMap m;
    m.n = n;
    m.components = std::move(components);
    m.jacobian_rows.resize(m.components.size());
    for (std::size_t r = 0; r < m.components.size(); ++r) {
      m.jacobian_rows[r].reserve(n);
      for (int c = 0; c < n; ++c) m.jacobian_rows[r].push_back(m.components[r].derivative(c));
    }
    return m;
  }

  int codomain_dim() const { return static_cast<int>(components.size()); }

  VectorXd value(const VectorXd& x) const {
    VectorXd y(codomain_dim());
    for (int r = 0; r < codomain_dim(); ++r) y(r) = components[r].eval(x);
    return y;
  }

  MatrixXd jacobian(const VectorXd& x) const {
    MatrixXd j(codomain_dim(), n);
    for (int r = 0; r < codomain_dim(); ++r)
      for (int c = 0; c < n; ++c) j(r, c) = jacobian_rows[r][c].eval(x);
    return j;
  }
};

inline PolynomialMap linear_map(const MatrixXd& L) {
  std::vector<Polynomial> comps;
  for (int r = 0; r < L.rows(); ++r) {
    Polynomial p;
    for (int c = 0; c < L.cols(); ++c) {
      if (L(r, c) == 0.0) continue;
      Polynomial::Term t;
      t.coeff = L(r, c);
      t.powers.assign(L.cols(), 0);
      t.powers[c] = 1;
      p.terms.push_back(std::move(t));
    }
    comps.push_back(std::move(p));
  }
  return PolynomialMap::of(static_cast<int>(L.cols()), std::move(comps));
}

// Smooth submersions B_j over a bounded box, with exact jacobians.
struct NonlinearDatum {
  Box domain;
  std::vector<PolynomialMap> maps;
  std::vector<double> exponents;
  std::vector<std::optional<datum::Rational>> exact_exponents;
  double derivative_bound = 0.0;       // asserted sup-norm of dB over the box
  std::vector<double> map_db_norms;    // measured sup |dB_j| per map
  std::string name;

  int n() const { return domain.dim(); }
  int m() const { return static_cast<int>(maps.size()); }

  // Linearization at x: the datum (dB(x), p).
  datum::LinearDatum linearize(const VectorXd& x) const {
    std::vector<MatrixXd> jac;
    jac.reserve(maps.size());
    for (const auto& b : maps) jac.push_back(b.jacobian(x));
    datum::LinearDatum d = datum::make_datum(n(), std::move(jac), exponents);
    d.exact_exponents = exact_exponents;
    d.validated = true;
    return d;
  }
};

// Samples a grid over the box, verifying that every dB_j(x) has full row
// rank and that the asserted derivative bound holds. Fills the measured
// per-map sup norms used for truncation-ball radii.
inline NonlinearDatum validate_nonlinear(NonlinearDatum nd, int grid_per_axis = 9) {
  const int n = nd.n();
  if (nd.m() < 1) throw Error("nonlinear datum needs at least one map");
  if (nd.exponents.size() != nd.maps.size()) throw ShapeMismatch("one exponent per map required");
  if (nd.exact_exponents.size() != nd.maps.size())
    nd.exact_exponents.assign(nd.maps.size(), std::nullopt);
  for (std::size_t j = 0; j < nd.exponents.size(); ++j)
    if (!(nd.exponents[j] >= 0.0 && nd.exponents[j] <= 1.0))
      throw ExponentOutOfRange(static_cast<int>(j));

  nd.map_db_norms.assign(nd.m(), 0.0);
  std::vector<int> idx(n, 0);
  const long total = static_cast<long>(std::pow(grid_per_axis, n));
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    VectorXd x(n);
    for (int i = 0; i < n; ++i) {
      const int k = static_cast<int>(rem % grid_per_axis);
      rem /= grid_per_axis;
      const double t = grid_per_axis == 1 ? 0.5 : static_cast<double>(k) / (grid_per_axis - 1);
      x(i) = nd.domain.lo(i) + t * (nd.domain.hi(i) - nd.domain.lo(i));
    }
    double db_norm_here = 0.0;
    for (int j = 0; j < nd.m(); ++j) {
      MatrixXd J = nd.maps[j].jacobian(x);
      if (linalg::rank(J) != J.rows()) throw RankDeficient(j);
      const double nrm = linalg::operator_norm(J);
      nd.map_db_norms[j] = std::max(nd.map_db_norms[j], nrm);
      db_norm_here = std::max(db_norm_here, nrm);
    }
    if (nd.derivative_bound > 0.0 && db_norm_here > nd.derivative_bound)
      throw Error("asserted derivative bound violated on the sample grid");
  }
  if (nd.derivative_bound <= 0.0)
    nd.derivative_bound = *std::max_element(nd.map_db_norms.begin(), nd.map_db_norms.end());
  return nd;
}

}  // namespace blflow::nonlinear
