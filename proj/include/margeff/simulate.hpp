#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"
#include "margeff/expression.hpp"
#include "margeff/family.hpp"
#include "margeff/glm.hpp"
#include "margeff/rng.hpp"

namespace margeff {

// Covariate generator for one simulated column.
struct VarGen {
  enum class Kind { uniform, bernoulli, normal, constant, column };
  Kind kind = Kind::constant;
  double a = 0.0, b = 0.0;      // (lo, hi) / (p, -) / (mean, sd) / (c, -)
  std::vector<double> values;   // column

  static VarGen uniform(double lo, double hi) { return {Kind::uniform, lo, hi, {}}; }
  static VarGen bernoulli(double p) { return {Kind::bernoulli, p, 0.0, {}}; }
  static VarGen normal(double mean, double sd) { return {Kind::normal, mean, sd, {}}; }
  static VarGen constant(double c) { return {Kind::constant, c, 0.0, {}}; }
  static VarGen column(std::vector<double> v) {
    return {Kind::column, 0.0, 0.0, std::move(v)};
  }
};

// Recipe to simulate a dataset from a GLM: a linear-predictor expression
// over named coefficients and variables, a response family and a seed.
struct SimSpec {
  std::string predictor;                           // e.g. "b0+b1*log(X)+b2*A"
  std::map<std::string, double> coefficients;
  std::vector<std::pair<std::string, VarGen>> variables;  // column order
  Family family;
  std::optional<LinkKind> link;                    // canonical by default
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double gaussian_sd = 1.0;
  double nb_theta = 1.0;
  std::string response_name = "Y";
};

namespace detail {

inline void validate_sim_spec(const SimSpec& spec, const Expression& expr) {
  if (spec.n < 1) {
    throw Error(ErrorCode::bad_argument, "n must be >= 1");
  }
  for (const auto& sym : expr.free_symbols()) {
    bool is_coef = spec.coefficients.count(sym) > 0;
    bool is_var = false;
    for (const auto& [name, gen] : spec.variables) {
      if (name == sym) is_var = true;
    }
    if (is_coef == is_var) {
      throw Error(ErrorCode::bad_argument,
                  is_coef ? "symbol bound as both coefficient and variable: " + sym
                          : "unbound symbol in predictor: " + sym);
    }
  }
  for (const auto& [name, gen] : spec.variables) {
    switch (gen.kind) {
      case VarGen::Kind::uniform:
        if (!(gen.a < gen.b)) {
          throw Error(ErrorCode::bad_argument, "uniform(lo, hi) needs lo < hi for " + name);
        }
        break;
      case VarGen::Kind::bernoulli:
        if (!(gen.a >= 0.0 && gen.a <= 1.0)) {
          throw Error(ErrorCode::bad_argument, "bernoulli(p) needs p in [0, 1] for " + name);
        }
        break;
      case VarGen::Kind::normal:
        if (!(gen.b >= 0.0)) {
          throw Error(ErrorCode::bad_argument, "normal(mean, sd) needs sd >= 0 for " + name);
        }
        break;
      case VarGen::Kind::column:
        if (gen.values.size() != spec.n) {
          throw Error(ErrorCode::dimension_mismatch,
                      "column generator for " + name + " has wrong length");
        }
        break;
      case VarGen::Kind::constant:
        break;
    }
  }
}

inline std::vector<double> generate_column(const VarGen& gen, std::size_t n, Rng rng) {
  std::vector<double> out(n);
  switch (gen.kind) {
    case VarGen::Kind::uniform:
      for (auto& v : out) v = rng.uniform(gen.a, gen.b);
      break;
    case VarGen::Kind::bernoulli:
      for (auto& v : out) v = rng.bernoulli(gen.a);
      break;
    case VarGen::Kind::normal:
      for (auto& v : out) v = rng.normal(gen.a, gen.b);
      break;
    case VarGen::Kind::constant:
      for (auto& v : out) v = gen.a;
      break;
    case VarGen::Kind::column:
      out = gen.values;
      break;
  }
  return out;
}

inline double draw_response(Rng& rng, const Family& family, double mu,
                            const SimSpec& spec) {
  switch (family.kind) {
    case FamilyKind::gaussian:
      return rng.normal(mu, spec.gaussian_sd);
    case FamilyKind::binomial:
      return rng.bernoulli(mu);
    case FamilyKind::poisson:
      return rng.poisson(mu);
    case FamilyKind::gamma: {
      double phi = family.dispersion.value_or(1.0);
      return rng.gamma(1.0 / phi, mu * phi);
    }
    case FamilyKind::inverse_gaussian: {
      double phi = family.dispersion.value_or(1.0);
      return rng.inverse_gaussian(mu, 1.0 / phi);
    }
    case FamilyKind::negative_binomial:
      return rng.negative_binomial(mu, spec.nb_theta);
  }
  return mu;
}

}  // namespace detail

// Simulates Y plus all variable columns: generates covariates, evaluates
// the linear predictor per row, maps through the inverse link and draws
// the response. Bit-identical output for identical specs.
inline Dataset glm_data(const SimSpec& spec) {
  Expression expr = Expression::parse(spec.predictor);
  detail::validate_sim_spec(spec, expr);
  Link link{spec.link.value_or(canonical_link(spec.family.kind))};

  Dataset data;
  std::vector<const std::vector<double>*> var_columns;
  {
    std::uint64_t var_index = 0;
    for (const auto& [name, gen] : spec.variables) {
      Rng rng(derive_stream(spec.seed, {0x636f6c75ULL, var_index++}));
      data.add_column(name, detail::generate_column(gen, spec.n, rng));
    }
  }

  Expression::SymbolTable symbols(spec.coefficients.begin(), spec.coefficients.end());
  Rng response_rng(derive_stream(spec.seed, {0x72657370ULL}));
  std::vector<double> y(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (const auto& [name, gen] : spec.variables) symbols[name] = data.col(name)[i];
    double eta = expr.eval(symbols);
    double mu = link.g_inv(eta);
    spec.family.check_mean(mu);
    y[i] = detail::draw_response(response_rng, spec.family, mu, spec);
    spec.family.check_response(y[i]);
  }

  Dataset out;
  out.add_column(spec.response_name, std::move(y));
  for (const auto& [name, gen] : spec.variables) {
    out.add_column(name, data.col(name));
  }
  return out;
}

struct RecoveryReport {
  std::vector<std::string> labels;       // design column labels
  std::vector<double> true_values;       // coefficient values from the spec
  std::vector<double> estimates;         // refit GLM coefficients
  double max_abs_error = 0.0;
};

namespace detail {

// Flattens a predictor that is linear in its coefficients into
// (coefficient name, coefficient-free row expression) terms.
struct LinearTerm {
  std::string coefficient;
  std::vector<const Expression::Node*> factors;  // product of these per row
  double sign = 1.0;
};

inline bool node_mentions(const Expression::Node& node,
                          const std::map<std::string, double>& coefficients) {
  if (node.kind == Expression::Node::Kind::symbol) {
    return coefficients.count(node.name) > 0;
  }
  for (const auto& c : node.children) {
    if (node_mentions(c, coefficients)) return true;
  }
  return false;
}

inline void flatten_factors(const Expression::Node& node,
                            const std::map<std::string, double>& coefficients,
                            LinearTerm& term) {
  using K = Expression::Node::Kind;
  if (node.kind == K::mul) {
    flatten_factors(node.children[0], coefficients, term);
    flatten_factors(node.children[1], coefficients, term);
    return;
  }
  if (node.kind == K::neg) {
    term.sign = -term.sign;
    flatten_factors(node.children[0], coefficients, term);
    return;
  }
  if (node.kind == K::symbol && coefficients.count(node.name)) {
    if (!term.coefficient.empty()) {
      throw Error(ErrorCode::bad_argument,
                  "predictor is not linear: coefficients multiply each other");
    }
    term.coefficient = node.name;
    return;
  }
  if (node_mentions(node, coefficients)) {
    throw Error(ErrorCode::bad_argument,
                "predictor is not linear in coefficient inside sub-expression");
  }
  term.factors.push_back(&node);
}

inline void flatten_terms(const Expression::Node& node,
                          const std::map<std::string, double>& coefficients,
                          double sign, std::vector<LinearTerm>& out) {
  using K = Expression::Node::Kind;
  if (node.kind == K::add || node.kind == K::sub) {
    flatten_terms(node.children[0], coefficients, sign, out);
    flatten_terms(node.children[1], coefficients,
                  node.kind == K::sub ? -sign : sign, out);
    return;
  }
  if (node.kind == K::neg) {
    flatten_terms(node.children[0], coefficients, -sign, out);
    return;
  }
  LinearTerm term;
  term.sign = sign;
  flatten_factors(node, coefficients, term);
  if (term.coefficient.empty()) {
    throw Error(ErrorCode::bad_argument,
                "predictor term without a coefficient symbol is not supported");
  }
  out.push_back(std::move(term));
}

}  // namespace detail

// Self-test: simulate n_large rows, refit the implied GLM and report the
// worst absolute coefficient error. Requires the predictor to be linear
// in its coefficients after transforms.
inline RecoveryReport recover_coefficients_check(const SimSpec& base_spec,
                                                 std::size_t n_large) {
  SimSpec spec = base_spec;
  spec.n = n_large;
  Expression expr = Expression::parse(spec.predictor);

  std::vector<detail::LinearTerm> terms;
  detail::flatten_terms(expr.root(), spec.coefficients, 1.0, terms);

  // One design column per distinct coefficient; repeated mentions sum.
  std::vector<std::string> labels;
  std::vector<std::size_t> column_of(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    auto it = std::find(labels.begin(), labels.end(), terms[t].coefficient);
    if (it == labels.end()) {
      column_of[t] = labels.size();
      labels.push_back(terms[t].coefficient);
    } else {
      column_of[t] = static_cast<std::size_t>(it - labels.begin());
    }
  }

  Dataset data = glm_data(spec);

  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(n_large), static_cast<Eigen::Index>(labels.size()));
  Expression::SymbolTable symbols;
  for (std::size_t i = 0; i < n_large; ++i) {
    for (const auto& [name, gen] : spec.variables) symbols[name] = data.col(name)[i];
    for (std::size_t t = 0; t < terms.size(); ++t) {
      double v = terms[t].sign;
      for (const auto* node : terms[t].factors) {
        v *= Expression::eval_subtree(*node, symbols);
      }
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(column_of[t])) += v;
    }
  }

  const auto& y = data.col(spec.response_name);
  Eigen::VectorXd yv =
      Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  GlmFit fit = irls_fit(design, yv, spec.family, labels);

  RecoveryReport report;
  report.labels = labels;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    report.true_values.push_back(spec.coefficients.at(labels[c]));
    report.estimates.push_back(fit.coefficients[static_cast<Eigen::Index>(c)]);
    report.max_abs_error = std::max(
        report.max_abs_error,
        std::abs(report.true_values.back() - report.estimates.back()));
  }
  return report;
}

}  // namespace margeff
