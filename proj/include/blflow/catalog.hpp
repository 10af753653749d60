#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "blflow/datum.hpp"
#include "blflow/errors.hpp"
#include "blflow/nonlinear.hpp"

namespace blflow::catalog {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline datum::Rational rational(std::int64_t n, std::int64_t d) { return datum::Rational::of(n, d); }

inline datum::LinearDatum with_exact(datum::LinearDatum d,
                                     const std::vector<datum::Rational>& rs) {
  d.exact_exponents.clear();
  for (const auto& r : rs) d.exact_exponents.emplace_back(r);
  return datum::validate_datum(std::move(d));
}

// L_1 = [1 0], L_2 = [0 1], p = (1, 1).
inline datum::LinearDatum loomis_whitney_2d() {
  MatrixXd l1(1, 2), l2(1, 2);
  l1 << 1, 0;
  l2 << 0, 1;
  return with_exact(datum::make_datum(2, {l1, l2}, {1.0, 1.0}), {rational(1, 1), rational(1, 1)});
}

// n = 1, both maps the identity, p = (1/2, 1/2).
inline datum::LinearDatum hoelder_1d() {
  MatrixXd id = MatrixXd::Identity(1, 1);
  return with_exact(datum::make_datum(1, {id, id}, {0.5, 0.5}), {rational(1, 2), rational(1, 2)});
}

inline datum::LinearDatum hoelder_2d() {
  MatrixXd id = MatrixXd::Identity(2, 2);
  return with_exact(datum::make_datum(2, {id, id}, {0.5, 0.5}), {rational(1, 2), rational(1, 2)});
}

// Young convolution datum: L_1 = x, L_2 = y, L_3 = x - y, p = 2/3 each.
inline datum::LinearDatum young_2_3() {
  MatrixXd l1(1, 2), l2(1, 2), l3(1, 2);
  l1 << 1, 0;
  l2 << 0, 1;
  l3 << 1, -1;
  const double p = 2.0 / 3.0;
  return with_exact(datum::make_datum(2, {l1, l2, l3}, {p, p, p}),
                    {rational(2, 3), rational(2, 3), rational(2, 3)});
}

// Loomis-Whitney in R^3: coordinate-plane projections, p = 1/2 each.
inline datum::LinearDatum loomis_whitney_3d() {
  MatrixXd l1(2, 3), l2(2, 3), l3(2, 3);
  l1 << 0, 1, 0, 0, 0, 1;
  l2 << 1, 0, 0, 0, 0, 1;
  l3 << 1, 0, 0, 0, 1, 0;
  const double p = 0.5;
  return with_exact(datum::make_datum(3, {l1, l2, l3}, {p, p, p}),
                    {rational(1, 2), rational(1, 2), rational(1, 2)});
}

// Hoelder-type segment datum L(t) = ((1), (1+t)); BL(t) = (1+t)^{-1/2} in
// closed form, which makes it the regression workhorse.
inline datum::LinearDatum hoelder_segment(double t) {
  MatrixXd l1(1, 1), l2(1, 1);
  l1 << 1.0;
  l2 << 1.0 + t;
  return with_exact(datum::make_datum(1, {l1, l2}, {0.5, 0.5}), {rational(1, 2), rational(1, 2)});
}

inline double hoelder_segment_bl(double t) { return 1.0 / std::sqrt(1.0 + t); }

// B(x, y) = (x + eps y^2, y): the perturbed Loomis-Whitney datum on
// [-1, 1]^2.
inline nonlinear::NonlinearDatum perturbed_lw(double eps, double box_halfwidth = 1.0) {
  using nonlinear::Polynomial;
  Polynomial b1;
  b1.terms.push_back({1.0, {1, 0}});
  if (eps != 0.0) b1.terms.push_back({eps, {0, 2}});
  Polynomial b2;
  b2.terms.push_back({1.0, {0, 1}});

  nonlinear::NonlinearDatum nd;
  nd.domain = nonlinear::Box::cube(2, -box_halfwidth, box_halfwidth);
  nd.maps.push_back(nonlinear::PolynomialMap::of(2, {b1}));
  nd.maps.push_back(nonlinear::PolynomialMap::of(2, {b2}));
  nd.exponents = {1.0, 1.0};
  nd.exact_exponents = {rational(1, 1), rational(1, 1)};
  nd.name = "perturbed-lw-eps";
  return nonlinear::validate_nonlinear(std::move(nd));
}

// Shear-perturbed Loomis-Whitney in R^3: B_1(x) = (x2 + eps x3^2, x3),
// B_2, B_3 the plain projections; p = 1/2 each.
inline nonlinear::NonlinearDatum shear_lw_3d(double eps, double box_halfwidth = 1.0) {
  using nonlinear::Polynomial;
  auto coord = [](int i) {
    Polynomial p;
    Polynomial::Term t;
    t.coeff = 1.0;
    t.powers.assign(3, 0);
    t.powers[i] = 1;
    p.terms.push_back(std::move(t));
    return p;
  };
  Polynomial sheared = coord(1);
  if (eps != 0.0) {
    Polynomial::Term t;
    t.coeff = eps;
    t.powers = {0, 0, 2};
    sheared.terms.push_back(std::move(t));
  }
  nonlinear::NonlinearDatum nd;
  nd.domain = nonlinear::Box::cube(3, -box_halfwidth, box_halfwidth);
  nd.maps.push_back(nonlinear::PolynomialMap::of(3, {sheared, coord(2)}));
  nd.maps.push_back(nonlinear::PolynomialMap::of(3, {coord(0), coord(2)}));
  nd.maps.push_back(nonlinear::PolynomialMap::of(3, {coord(0), coord(1)}));
  nd.exponents = {0.5, 0.5, 0.5};
  nd.exact_exponents = {rational(1, 2), rational(1, 2), rational(1, 2)};
  nd.name = "shear-lw-3d-eps";
  return nonlinear::validate_nonlinear(std::move(nd));
}

// Any linear datum embedded as a nonlinear one over a box; the eps = 0
// control path.
inline nonlinear::NonlinearDatum embed_linear(const datum::LinearDatum& d, const nonlinear::Box& u,
                                              std::string name = "linear") {
  nonlinear::NonlinearDatum nd;
  nd.domain = u;
  for (const auto& L : d.maps) nd.maps.push_back(nonlinear::linear_map(L));
  nd.exponents = d.exponents;
  nd.exact_exponents = d.exact_exponents;
  nd.name = std::move(name);
  return nonlinear::validate_nonlinear(std::move(nd));
}

struct CatalogEntry {
  std::string id;
  std::string kind;  // "linear" | "nonlinear"
  std::string description;
};

inline std::vector<CatalogEntry> entries() {
  return {
      {"hoelder-1d", "linear", "n=1, two identity maps, p=(1/2,1/2)"},
      {"hoelder-2d", "linear", "n=2, two identity maps, p=(1/2,1/2)"},
      {"loomis-whitney-2d", "linear", "coordinate projections of R^2, p=(1,1)"},
      {"loomis-whitney-3d", "linear", "coordinate-plane projections of R^3, p=(1/2,...)"},
      {"young-2-3", "linear", "Young convolution datum x, y, x-y with p=2/3"},
      {"hoelder-segment", "linear", "parametric L(t)=((1),(1+t)), closed-form constant"},
      {"perturbed-lw-eps", "nonlinear", "B(x,y)=(x+eps*y^2, y) on [-1,1]^2, parametric eps"},
      {"shear-lw-3d-eps", "nonlinear", "shear-perturbed Loomis-Whitney in R^3, parametric eps"},
  };
}

inline datum::LinearDatum linear_by_id(const std::string& id, double param = 0.0) {
  if (id == "hoelder-1d") return hoelder_1d();
  if (id == "hoelder-2d") return hoelder_2d();
  if (id == "loomis-whitney-2d") return loomis_whitney_2d();
  if (id == "loomis-whitney-3d") return loomis_whitney_3d();
  if (id == "young-2-3") return young_2_3();
  if (id == "hoelder-segment") return hoelder_segment(param);
  throw ConfigInvalid("unknown linear catalog id: " + id);
}

inline nonlinear::NonlinearDatum nonlinear_by_id(const std::string& id, double eps) {
  if (id == "perturbed-lw-eps") return perturbed_lw(eps);
  if (id == "shear-lw-3d-eps") return shear_lw_3d(eps);
  throw ConfigInvalid("unknown nonlinear catalog id: " + id);
}

}  // namespace blflow::catalog
