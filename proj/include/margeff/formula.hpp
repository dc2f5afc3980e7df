#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"

namespace margeff {

enum class Transform { identity, log, sqrt };

inline const char* transform_name(Transform t) {
  switch (t) {
    case Transform::identity: return "";
    case Transform::log: return "log";
    case Transform::sqrt: return "sqrt";
  }
  return "";
}

struct Factor {
  std::string column;
  Transform fn = Transform::identity;

  bool operator==(const Factor& o) const {
    return column == o.column && fn == o.fn;
  }
};

// One design-matrix column: a single (possibly transformed) covariate or a
// product of plain covariates.
struct Term {
  std::vector<Factor> factors;

  bool is_interaction() const { return factors.size() > 1; }

  std::string label() const {
    std::string out;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i) out += ":";
      if (factors[i].fn == Transform::identity) {
        out += factors[i].column;
      } else {
        out += std::string(transform_name(factors[i].fn)) + "(" + factors[i].column + ")";
      }
    }
    return out;
  }

  // Order-insensitive identity, so A:X and X:A dedupe to one term.
  std::vector<Factor> canonical() const {
    std::vector<Factor> f = factors;
    std::sort(f.begin(), f.end(), [](const Factor& a, const Factor& b) {
      return a.column != b.column ? a.column < b.column : a.fn < b.fn;
    });
    return f;
  }

  bool operator==(const Term& o) const { return factors == o.factors; }
};

// Parsed model formula `response ~ terms`. `a*b` has already been expanded
// to {a, b, a:b}; an empty term list is the intercept-only model.
struct FormulaAst {
  std::string response;
  std::vector<Term> terms;

  bool references(const std::string& column) const {
    for (const auto& t : terms) {
      for (const auto& f : t.factors) {
        if (f.column == column) return true;
      }
    }
    return false;
  }

  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    for (const auto& t : terms) {
      for (const auto& f : t.factors) {
        if (std::find(out.begin(), out.end(), f.column) == out.end()) {
          out.push_back(f.column);
        }
      }
    }
    return out;
  }

  bool operator==(const FormulaAst& o) const {
    return response == o.response && terms == o.terms;
  }
};

struct DesignMatrix {
  Eigen::MatrixXd matrix;                 // n x (1 + q), first column all ones
  std::vector<std::string> column_labels; // "(Intercept)" first
};

namespace detail {

inline std::string strip_ws(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

inline bool valid_ident(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
  }
  return true;
}

inline Factor parse_factor(const std::string& tok, std::size_t pos) {
  auto open = tok.find('(');
  if (open != std::string::npos) {
    if (tok.back() != ')') {
      throw Error(ErrorCode::syntax_error,
                  "expected ')' in term at position " + std::to_string(pos));
    }
    std::string fn = tok.substr(0, open);
    std::string arg = tok.substr(open + 1, tok.size() - open - 2);
    if (!valid_ident(arg)) {
      throw Error(ErrorCode::syntax_error,
                  "bad transform argument '" + arg + "' at position " + std::to_string(pos));
    }
    if (fn == "log") return Factor{arg, Transform::log};
    if (fn == "sqrt") return Factor{arg, Transform::sqrt};
    throw Error(ErrorCode::unknown_function, "unknown transform: " + fn);
  }
  if (!valid_ident(tok)) {
    throw Error(ErrorCode::syntax_error,
                "bad term '" + tok + "' at position " + std::to_string(pos));
  }
  return Factor{tok, Transform::identity};
}

inline void append_term(std::vector<Term>& terms, Term t) {
  auto canon = t.canonical();
  for (const auto& existing : terms) {
    if (existing.canonical() == canon) return;  // keep first occurrence
  }
  terms.push_back(std::move(t));
}

}  // namespace detail

// Grammar: `resp ~ expr` with `+`-separated terms; `a*b` crossing expands
// to a + b + a:b; `a:b` is a pure interaction of plain columns; log/sqrt
// apply to single columns; `1` is the explicit intercept-only right side.
inline FormulaAst parse_formula(const std::string& text) {
  auto tilde = text.find('~');
  if (tilde == std::string::npos) {
    throw Error(ErrorCode::syntax_error, "formula must contain '~'");
  }
  FormulaAst ast;
  ast.response = detail::strip_ws(text.substr(0, tilde));
  if (!detail::valid_ident(ast.response)) {
    throw Error(ErrorCode::syntax_error, "bad response name '" + ast.response + "'");
  }

  std::string rhs = detail::strip_ws(text.substr(tilde + 1));
  if (rhs.empty()) {
    throw Error(ErrorCode::syntax_error, "empty right-hand side");
  }

  std::size_t pos = 0;
  while (pos <= rhs.size()) {
    std::size_t next = rhs.find('+', pos);
    std::string tok = rhs.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (tok.empty()) {
      throw Error(ErrorCode::syntax_error, "empty term at position " + std::to_string(pos));
    }
    if (tok == "1") {
      // explicit intercept, always present anyway
    } else if (tok.find('*') != std::string::npos) {
      auto star = tok.find('*');
      std::string a = tok.substr(0, star);
      std::string b = tok.substr(star + 1);
      if (!detail::valid_ident(a) || !detail::valid_ident(b) ||
          b.find('*') != std::string::npos) {
        throw Error(ErrorCode::syntax_error,
                    "crossing supports two plain columns, got '" + tok + "'");
      }
      if (a == b) {
        throw Error(ErrorCode::syntax_error, "crossing of a column with itself: " + tok);
      }
      detail::append_term(ast.terms, Term{{Factor{a, Transform::identity}}});
      detail::append_term(ast.terms, Term{{Factor{b, Transform::identity}}});
      detail::append_term(ast.terms, Term{{Factor{a, Transform::identity},
                                           Factor{b, Transform::identity}}});
    } else if (tok.find(':') != std::string::npos) {
      Term t;
      std::size_t fpos = 0;
      while (fpos <= tok.size()) {
        std::size_t colon = tok.find(':', fpos);
        std::string name =
            tok.substr(fpos, colon == std::string::npos ? std::string::npos : colon - fpos);
        if (!detail::valid_ident(name)) {
          throw Error(ErrorCode::syntax_error,
                      "bad interaction component '" + name + "' in '" + tok + "'");
        }
        t.factors.push_back(Factor{name, Transform::identity});
        if (colon == std::string::npos) break;
        fpos = colon + 1;
      }
      for (std::size_t i = 0; i < t.factors.size(); ++i) {
        for (std::size_t j = i + 1; j < t.factors.size(); ++j) {
          if (t.factors[i].column == t.factors[j].column) {
            throw Error(ErrorCode::syntax_error,
                        "interaction repeats column '" + t.factors[i].column + "'");
          }
        }
      }
      detail::append_term(ast.terms, std::move(t));
    } else {
      detail::append_term(ast.terms, Term{{detail::parse_factor(tok, pos)}});
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }

  for (const auto& t : ast.terms) {
    for (const auto& f : t.factors) {
      if (f.column == ast.response) {
        throw Error(ErrorCode::syntax_error,
                    "response '" + ast.response + "' also appears as a term");
      }
    }
  }
  return ast;
}

inline std::string format_formula(const FormulaAst& ast) {
  std::string out = ast.response + " ~ ";
  if (ast.terms.empty()) return out + "1";
  for (std::size_t i = 0; i < ast.terms.size(); ++i) {
    if (i) out += " + ";
    out += ast.terms[i].label();
  }
  return out;
}

namespace detail {

inline double apply_transform(Transform fn, double x, const std::string& label) {
  double v = x;
  if (fn == Transform::log) v = std::log(x);
  if (fn == Transform::sqrt) v = std::sqrt(x);
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::nonfinite_value,
                "non-finite value produced by " + label);
  }
  return v;
}

}  // namespace detail

// Intercept column prepended; interaction columns are elementwise products;
// column order follows the term order of the AST.
inline DesignMatrix build_design(const FormulaAst& ast, const Dataset& data) {
  const std::size_t n = data.n_rows();
  DesignMatrix out;
  out.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(1 + ast.terms.size()));
  out.matrix.col(0).setOnes();
  out.column_labels.push_back("(Intercept)");

  for (std::size_t t = 0; t < ast.terms.size(); ++t) {
    const Term& term = ast.terms[t];
    const std::string label = term.label();
    Eigen::VectorXd col = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    for (const auto& f : term.factors) {
      const auto& raw = data.col(f.column);  // throws missing_column
      for (std::size_t i = 0; i < n; ++i) {
        col[static_cast<Eigen::Index>(i)] *=
            detail::apply_transform(f.fn, raw[i], label);
      }
    }
    if (!col.allFinite()) {
      throw Error(ErrorCode::nonfinite_value, "non-finite value in column " + label);
    }
    out.matrix.col(static_cast<Eigen::Index>(t + 1)) = col;
    out.column_labels.push_back(label);
  }
  return out;
}

}  // namespace margeff
