#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blflow/catalog.hpp"
#include "blflow/datum.hpp"
#include "blflow/errors.hpp"
#include "blflow/harness.hpp"
#include "blflow/mixture.hpp"
#include "blflow/nonlinear.hpp"

namespace blflow::io {

using nlohmann::json;

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigInvalid("parse error in " + path + ": " + e.what());
  }
  return j;
}

inline void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigInvalid("cannot write " + path);
  out << text;
}

// FNV-1a 64-bit; stable across platforms so manifests can be re-verified
// byte-for-byte.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Deterministic double formatting for CSV rows.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- linear datum <-> JSON -------------------------------------------------

inline json exponent_to_json(double value, const std::optional<datum::Rational>& exact) {
  if (exact) return json(std::to_string(exact->num) + "/" + std::to_string(exact->den));
  return json(value);
}

inline std::pair<double, std::optional<datum::Rational>> exponent_from_json(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    const auto slash = s.find('/');
    if (slash == std::string::npos) throw ConfigInvalid("rational exponent must be \"num/den\"");
    const auto r = datum::Rational::of(std::stoll(s.substr(0, slash)),
                                       std::stoll(s.substr(slash + 1)));
    return {r.value(), r};
  }
  return {j.get<double>(), std::nullopt};
}

inline json datum_to_json(const datum::LinearDatum& d) {
  json j;
  j["n"] = d.n;
  j["maps"] = json::array();
  for (const auto& L : d.maps) {
    json m;
    m["rows"] = L.rows();
    m["cols"] = L.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(L.size()));
    for (int r = 0; r < L.rows(); ++r)
      for (int c = 0; c < L.cols(); ++c) data.push_back(L(r, c));  // row-major
    m["data"] = data;
    j["maps"].push_back(std::move(m));
  }
  j["exponents"] = json::array();
  for (std::size_t k = 0; k < d.exponents.size(); ++k)
    j["exponents"].push_back(exponent_to_json(d.exponents[k], d.exact_exponents[k]));
  return j;
}

inline datum::LinearDatum datum_from_json(const json& j) {
  datum::LinearDatum d;
  d.n = j.at("n").get<int>();
  for (const auto& m : j.at("maps")) {
    const int rows = m.at("rows").get<int>();
    const int cols = m.at("cols").get<int>();
    const auto data = m.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != rows * cols)
      throw ConfigInvalid("map data length does not match rows*cols");
    Eigen::MatrixXd L(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) L(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    d.maps.push_back(std::move(L));
  }
  for (const auto& e : j.at("exponents")) {
    auto [v, exact] = exponent_from_json(e);
    d.exponents.push_back(v);
    d.exact_exponents.push_back(exact);
  }
  return datum::validate_datum(std::move(d));
}

// ---- nonlinear datum <-> JSON ----------------------------------------------

inline json polynomial_to_json(const nonlinear::Polynomial& p) {
  json terms = json::array();
  for (const auto& t : p.terms) terms.push_back({{"coeff", t.coeff}, {"powers", t.powers}});
  return json{{"terms", std::move(terms)}};
}

inline nonlinear::Polynomial polynomial_from_json(const json& j) {
  nonlinear::Polynomial p;
  for (const auto& t : j.at("terms"))
    p.terms.push_back({t.at("coeff").get<double>(), t.at("powers").get<std::vector<int>>()});
  return p;
}

inline nonlinear::NonlinearDatum nonlinear_from_json(const json& j) {
  if (j.contains("catalog")) {
    const double eps = j.value("eps", 0.0);
    return catalog::nonlinear_by_id(j.at("catalog").get<std::string>(), eps);
  }
  nonlinear::NonlinearDatum nd;
  const int n = j.at("n").get<int>();
  nd.domain.lo = Eigen::Map<const Eigen::VectorXd>(
      j.at("domain").at("lo").get<std::vector<double>>().data(), n);
  const auto lo = j.at("domain").at("lo").get<std::vector<double>>();
  const auto hi = j.at("domain").at("hi").get<std::vector<double>>();
  nd.domain.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), n);
  nd.domain.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), n);
  for (const auto& pm : j.at("polynomial_maps")) {
    std::vector<nonlinear::Polynomial> comps;
    for (const auto& c : pm.at("components")) comps.push_back(polynomial_from_json(c));
    nd.maps.push_back(nonlinear::PolynomialMap::of(n, std::move(comps)));
  }
  for (const auto& e : j.at("exponents")) {
    auto [v, exact] = exponent_from_json(e);
    nd.exponents.push_back(v);
    nd.exact_exponents.push_back(exact);
  }
  nd.name = j.value("name", std::string("custom"));
  return nonlinear::validate_nonlinear(std::move(nd));
}

// ---- mixtures <-> JSON -------------------------------------------------------

inline json mixture_to_json(const mixture::GaussianMixture& f) {
  json terms = json::array();
  for (const auto& t : f.terms) {
    std::vector<double> cov;
    for (int r = 0; r < t.cov.rows(); ++r)
      for (int c = 0; c < t.cov.cols(); ++c) cov.push_back(t.cov(r, c));
    terms.push_back({{"weight", t.weight},
                     {"center", std::vector<double>(t.center.data(), t.center.data() + t.center.size())},
                     {"covariance", std::move(cov)}});
  }
  return json{{"dim", f.dim()}, {"terms", std::move(terms)}};
}

inline mixture::GaussianMixture mixture_from_json(const json& j) {
  mixture::GaussianMixture f;
  const int dim = j.at("dim").get<int>();
  for (const auto& t : j.at("terms")) {
    mixture::GaussianMixture::Term term;
    term.weight = t.at("weight").get<double>();
    const auto center = t.at("center").get<std::vector<double>>();
    if (static_cast<int>(center.size()) != dim) throw ConfigInvalid("term center has wrong size");
    term.center = Eigen::Map<const Eigen::VectorXd>(center.data(), dim);
    const auto cov = t.at("covariance").get<std::vector<double>>();
    if (static_cast<int>(cov.size()) != dim * dim)
      throw ConfigInvalid("term covariance must be a row-major dim*dim list");
    term.cov = Eigen::Map<const Eigen::MatrixXd>(cov.data(), dim, dim).transpose();
    f.terms.push_back(std::move(term));
  }
  return mixture::validate_mixture(std::move(f));
}

inline json mixtures_to_json(const std::vector<mixture::GaussianMixture>& fs) {
  json arr = json::array();
  for (const auto& f : fs) arr.push_back(mixture_to_json(f));
  return json{{"mixtures", std::move(arr)}};
}

inline std::vector<mixture::GaussianMixture> mixtures_from_json(const json& j) {
  std::vector<mixture::GaussianMixture> fs;
  for (const auto& f : j.at("mixtures")) fs.push_back(mixture_from_json(f));
  return fs;
}

// ---- reports -> CSV / JSON ---------------------------------------------------

inline std::string csv_header() { return "experiment,datum,tau,label,lhs,rhs,ratio,bound,pass\n"; }

inline void append_csv(std::string& csv, const harness::ExperimentReport& rep) {
  for (const auto& m : rep.measurements) {
    csv += rep.experiment;
    csv += ',';
    csv += rep.datum_id;
    csv += ',';
    csv += fmt(m.tau);
    csv += ',';
    csv += m.label;
    csv += ',';
    csv += fmt(m.lhs);
    csv += ',';
    csv += fmt(m.rhs);
    csv += ',';
    csv += fmt(m.ratio);
    csv += ',';
    csv += fmt(m.bound);
    csv += ',';
    csv += m.pass ? "1" : "0";
    csv += '\n';
  }
}

// Summary payload; deliberately free of timestamps and runtimes so a rerun
// reproduces it byte-for-byte (wall-clock data lives in the manifest).
inline json summary_json(const harness::ExperimentReport& rep) {
  json j;
  j["experiment"] = rep.experiment;
  j["datum"] = rep.datum_id;
  j["seed"] = rep.seed;
  j["pass"] = rep.pass;
  j["measurements"] = rep.measurements.size();
  j["fitted"] = json::object();
  for (const auto& [k, v] : rep.fitted) j["fitted"][k] = v;
  return j;
}

}  // namespace blflow::io
