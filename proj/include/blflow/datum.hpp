#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "blflow/errors.hpp"
#include "blflow/linalg.hpp"
#include "blflow/random.hpp"

namespace blflow::datum {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Exact exponent arithmetic for the scaling condition. Exponents supplied
// as numerator/denominator stay exact; plain doubles fall back to a
// tolerance comparison.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational of(std::int64_t n, std::int64_t d) {
    if (d == 0) throw Error("rational with zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
    return Rational{g ? n / g : n, g ? d / g : d};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// m surjective linear maps L_j : R^n -> R^{n_j} with exponents p_j in [0,1].
struct LinearDatum {
  int n = 0;
  std::vector<MatrixXd> maps;
  std::vector<double> exponents;
  // Parallel to exponents; set for entries given as exact fractions.
  std::vector<std::optional<Rational>> exact_exponents;
  bool validated = false;

  int m() const { return static_cast<int>(maps.size()); }
  int codomain_dim(int j) const { return static_cast<int>(maps[j].rows()); }

  // Flat 2-norm of the stacked map tuple, the |L| of datum-space distances.
  double tuple_norm() const {
    double s = 0.0;
    for (const auto& L : maps) s += L.squaredNorm();
    return std::sqrt(s);
  }
};

inline double datum_distance(const LinearDatum& a, const LinearDatum& b) {
  if (a.m() != b.m()) throw ShapeMismatch("datum map counts differ");
  double s = 0.0;
  for (int j = 0; j < a.m(); ++j) s += (a.maps[j] - b.maps[j]).squaredNorm();
  return std::sqrt(s);
}

inline LinearDatum make_datum(int n, std::vector<MatrixXd> maps, std::vector<double> exponents) {
  LinearDatum d;
  d.n = n;
  d.maps = std::move(maps);
  d.exponents = std::move(exponents);
  d.exact_exponents.assign(d.exponents.size(), std::nullopt);
  return d;
}

// Checks every type invariant and returns the datum with metadata filled.
// The map rows are left untouched.
inline LinearDatum validate_datum(LinearDatum d) {
  if (d.m() < 1) throw Error("datum needs at least one map");
  if (d.exponents.size() != d.maps.size()) throw ShapeMismatch("one exponent per map required");
  if (d.exact_exponents.size() != d.maps.size())
    d.exact_exponents.assign(d.maps.size(), std::nullopt);
  for (int j = 0; j < d.m(); ++j) {
    const auto& L = d.maps[j];
    if (L.cols() != d.n) throw ShapeMismatch("map " + std::to_string(j) + " has wrong domain");
    if (L.rows() > d.n) throw ShapeMismatch("map " + std::to_string(j) + " has n_j > n");
    if (linalg::rank(L) != L.rows()) throw RankDeficient(j);
    const double p = d.exponents[j];
    if (!(p >= 0.0 && p <= 1.0)) throw ExponentOutOfRange(j);
    if (d.exact_exponents[j]) {
      const auto& r = *d.exact_exponents[j];
      if (r.num < 0 || r.num > r.den) throw ExponentOutOfRange(j);
    }
  }
  d.validated = true;
  return d;
}

struct ScalingReport {
  double lhs = 0.0;  // sum p_j n_j
  double rhs = 0.0;  // n
  bool holds = false;
  bool exact = false;  // true when decided with rational arithmetic
};

inline ScalingReport check_scaling(const LinearDatum& d) {
  ScalingReport r;
  r.rhs = d.n;
  bool all_exact = true;
  for (const auto& e : d.exact_exponents) all_exact = all_exact && e.has_value();
  if (all_exact) {
    // sum num_j n_j / den_j == n, cleared of denominators.
    std::int64_t lcm = 1;
    for (const auto& e : d.exact_exponents) lcm = std::lcm(lcm, e->den);
    std::int64_t acc = 0;
    for (int j = 0; j < d.m(); ++j)
      acc += d.exact_exponents[j]->num * (lcm / d.exact_exponents[j]->den) * d.codomain_dim(j);
    r.exact = true;
    r.holds = (acc == static_cast<std::int64_t>(d.n) * lcm);
    r.lhs = static_cast<double>(acc) / static_cast<double>(lcm);
  } else {
    for (int j = 0; j < d.m(); ++j) r.lhs += d.exponents[j] * d.codomain_dim(j);
    r.holds = std::abs(r.lhs - r.rhs) < 1e-12;
  }
  return r;
}

struct SubspaceReport {
  MatrixXd basis;  // orthonormal columns spanning V
  int dimV = 0;
  std::vector<int> image_dims;     // dim(L_j V)
  double weighted_image_dim = 0.0;  // sum p_j dim(L_j V)
  bool satisfied = false;          // dim V <= weighted_image_dim
  bool critical = false;           // equality, V proper nontrivial
};

inline SubspaceReport check_subspace(const LinearDatum& d, const MatrixXd& basis_raw) {
  const int k = static_cast<int>(basis_raw.cols());
  if (basis_raw.rows() != d.n) throw ShapeMismatch("basis vectors must lie in R^n");
  if (linalg::rank(basis_raw) != k) throw DependentBasis();

  SubspaceReport rep;
  rep.basis = linalg::column_space_basis(basis_raw);
  rep.dimV = k;
  rep.image_dims.resize(d.m());
  for (int j = 0; j < d.m(); ++j) {
    const int via_rank = linalg::rank(d.maps[j] * rep.basis);
    // Cross-check: dim(L_j V) = dim V - dim(V ∩ ker L_j).
    const MatrixXd ker = linalg::kernel_basis(d.maps[j]);
    const int via_kernel = k - linalg::intersection_dim(rep.basis, ker);
    if (via_rank != via_kernel)
      throw Error("image dimension cross-check failed for map " + std::to_string(j));
    rep.image_dims[j] = via_rank;
    rep.weighted_image_dim += d.exponents[j] * via_rank;
  }
  rep.satisfied = rep.dimV <= rep.weighted_image_dim + 1e-12;

  bool equality;
  bool all_exact = true;
  for (const auto& e : d.exact_exponents) all_exact = all_exact && e.has_value();
  if (all_exact) {
    std::int64_t lcm = 1;
    for (const auto& e : d.exact_exponents) lcm = std::lcm(lcm, e->den);
    std::int64_t acc = 0;
    for (int j = 0; j < d.m(); ++j)
      acc += d.exact_exponents[j]->num * (lcm / d.exact_exponents[j]->den) * rep.image_dims[j];
    equality = (acc == static_cast<std::int64_t>(rep.dimV) * lcm);
  } else {
    equality = std::abs(rep.weighted_image_dim - rep.dimV) < 1e-9;
  }
  rep.critical = equality && rep.dimV > 0 && rep.dimV < d.n;
  return rep;
}

enum class Feasibility { infeasible, feasible_probable };

struct ProbeConfig {
  int random_subspaces = 2000;  // per dimension 1..n-1
  std::uint64_t seed = 1;
  int max_lattice = 4096;
};

struct ProbeReport {
  bool scaling_ok = false;
  Feasibility verdict = Feasibility::infeasible;
  std::vector<SubspaceReport> witnesses;  // violated subspaces
  std::vector<SubspaceReport> criticals;
  int subspaces_checked = 0;
};

namespace detail {

inline bool contains_projector(const std::vector<MatrixXd>& ps, const MatrixXd& p) {
  for (const auto& q : ps)
    if ((q - p).cwiseAbs().maxCoeff() < 1e-8) return true;
  return false;
}

// Closure of the kernel subspaces under sum and intersection, proper
// nontrivial members only, capped at max_lattice entries.
inline std::vector<MatrixXd> kernel_lattice(const LinearDatum& d, int max_lattice) {
  std::vector<MatrixXd> bases;
  std::vector<MatrixXd> projs;
  auto push = [&](const MatrixXd& basis) {
    if (basis.cols() == 0 || basis.cols() >= d.n) return;
    MatrixXd p = linalg::projector(basis);
    if (contains_projector(projs, p)) return;
    bases.push_back(linalg::column_space_basis(basis));
    projs.push_back(std::move(p));
  };
  for (int j = 0; j < d.m(); ++j) push(linalg::kernel_basis(d.maps[j]));
  std::size_t frontier_start = 0;
  while (frontier_start < bases.size() && static_cast<int>(bases.size()) < max_lattice) {
    const std::size_t end = bases.size();
    for (std::size_t a = frontier_start; a < end; ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        MatrixXd joined(d.n, bases[a].cols() + bases[b].cols());
        joined << bases[a], bases[b];
        push(joined);  // sum
        // intersection = ker[P_a^perp; P_b^perp]
        MatrixXd stacked(2 * d.n, d.n);
        stacked << MatrixXd::Identity(d.n, d.n) - linalg::projector(bases[a]),
            MatrixXd::Identity(d.n, d.n) - linalg::projector(bases[b]);
        push(linalg::kernel_basis(stacked));
        if (static_cast<int>(bases.size()) >= max_lattice) return bases;
      }
    }
    frontier_start = end;
  }
  return bases;
}

inline std::vector<MatrixXd> coordinate_subspaces(int n) {
  std::vector<MatrixXd> out;
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    int d = 0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) ++d;
    MatrixXd basis = MatrixXd::Zero(n, d);
    int c = 0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) basis(i, c++) = 1.0;
    out.push_back(std::move(basis));
  }
  return out;
}

}  // namespace detail

// Heuristic feasibility diagnostic: the scaling identity, the lattice
// generated by the kernels, every coordinate subspace, and seeded random
// subspaces of each intermediate dimension. A violation certifies
// infeasibility; no violation is only "feasible-probable". Enlarging the
// random budget extends the sampled sequence, so a violation found at a
// smaller budget is still found at a larger one.
inline ProbeReport feasibility_probe(const LinearDatum& d, const ProbeConfig& cfg = {}) {
  ProbeReport rep;
  rep.scaling_ok = check_scaling(d).holds;
  if (!rep.scaling_ok) {
    rep.verdict = Feasibility::infeasible;
    return rep;
  }

  std::vector<MatrixXd> critical_projs;
  auto consider = [&](const MatrixXd& basis) {
    SubspaceReport r = check_subspace(d, basis);
    ++rep.subspaces_checked;
    if (!r.satisfied) {
      rep.witnesses.push_back(std::move(r));
      return;
    }
    if (r.critical) {
      MatrixXd p = linalg::projector(r.basis);
      if (!detail::contains_projector(critical_projs, p)) {
        critical_projs.push_back(std::move(p));
        rep.criticals.push_back(std::move(r));
      }
    }
  };

  for (const auto& b : detail::kernel_lattice(d, cfg.max_lattice)) consider(b);
  for (const auto& b : detail::coordinate_subspaces(d.n)) consider(b);
  rnd::Engine eng(cfg.seed);
  for (int dim = 1; dim < d.n; ++dim)
    for (int s = 0; s < cfg.random_subspaces; ++s) consider(rnd::subspace_basis(eng, d.n, dim));

  rep.verdict = rep.witnesses.empty() ? Feasibility::feasible_probable : Feasibility::infeasible;
  return rep;
}

}  // namespace blflow::datum
