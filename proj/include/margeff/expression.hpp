#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "margeff/errors.hpp"

namespace margeff {

// Arithmetic expression over named symbols: +, -, *, /, unary minus,
// parentheses, numeric literals and the unary functions log / sqrt.
// Backs both simulation linear predictors ("b0+b1*log(X)+b2*A") and
// custom estimand functions ("psi1/sqrt(psi0)*2-1").
class Expression {
 public:
  struct Node {
    enum class Kind { number, symbol, add, sub, mul, div, neg, call };
    Kind kind;
    double value = 0.0;        // number
    std::string name;          // symbol / function name
    std::vector<Node> children;
  };

  using SymbolTable = std::unordered_map<std::string, double>;

  static Expression parse(const std::string& text) {
    Parser p(text);
    Expression e;
    e.text_ = text;
    e.root_ = p.parse_expr();
    p.expect_end();
    e.collect_symbols(e.root_);
    return e;
  }

  double eval(const SymbolTable& symbols) const {
    return eval_node(root_, [&](const std::string& n) {
      auto it = symbols.find(n);
      if (it == symbols.end()) {
        throw Error(ErrorCode::bad_argument, "unbound symbol: " + n);
      }
      return it->second;
    });
  }

  double eval(const std::function<double(const std::string&)>& lookup) const {
    return eval_node(root_, lookup);
  }

  const std::set<std::string>& free_symbols() const { return symbols_; }
  const std::string& text() const { return text_; }
  const Node& root() const { return root_; }

  // Evaluates an arbitrary subtree; used by callers that decompose the
  // expression structurally.
  static double eval_subtree(const Node& node, const SymbolTable& symbols) {
    return eval_node(node, [&](const std::string& n) {
      auto it = symbols.find(n);
      if (it == symbols.end()) {
        throw Error(ErrorCode::bad_argument, "unbound symbol: " + n);
      }
      return it->second;
    });
  }

 private:
  Node root_;
  std::set<std::string> symbols_;
  std::string text_;

  void collect_symbols(const Node& n) {
    if (n.kind == Node::Kind::symbol) symbols_.insert(n.name);
    for (const auto& c : n.children) collect_symbols(c);
  }

  static double eval_node(const Node& n,
                          const std::function<double(const std::string&)>& lookup) {
    using K = Node::Kind;
    switch (n.kind) {
      case K::number: return n.value;
      case K::symbol: return lookup(n.name);
      case K::add: return eval_node(n.children[0], lookup) + eval_node(n.children[1], lookup);
      case K::sub: return eval_node(n.children[0], lookup) - eval_node(n.children[1], lookup);
      case K::mul: return eval_node(n.children[0], lookup) * eval_node(n.children[1], lookup);
      case K::div: {
        double r = eval_node(n.children[0], lookup) / eval_node(n.children[1], lookup);
        if (!std::isfinite(r)) {
          throw Error(ErrorCode::nonfinite_value, "non-finite value in division");
        }
        return r;
      }
      case K::neg: return -eval_node(n.children[0], lookup);
      case K::call: {
        double arg = eval_node(n.children[0], lookup);
        double r = n.name == "log" ? std::log(arg) : std::sqrt(arg);
        if (!std::isfinite(r)) {
          throw Error(ErrorCode::nonfinite_value,
                      "non-finite value from " + n.name + "(" + std::to_string(arg) + ")");
        }
        return r;
      }
    }
    throw Error(ErrorCode::bad_argument, "corrupt expression node");
  }

  class Parser {
   public:
    explicit Parser(const std::string& text) : text_(text) {}

    Node parse_expr() {
      Node lhs = parse_term();
      for (;;) {
        skip_ws();
        if (peek() == '+' || peek() == '-') {
          char op = advance();
          Node rhs = parse_term();
          Node n;
          n.kind = op == '+' ? Node::Kind::add : Node::Kind::sub;
          n.children = {std::move(lhs), std::move(rhs)};
          lhs = std::move(n);
        } else {
          return lhs;
        }
      }
    }

    void expect_end() {
      skip_ws();
      if (pos_ < text_.size()) {
        throw Error(ErrorCode::syntax_error,
                    "unexpected character '" + std::string(1, peek()) +
                        "' at position " + std::to_string(pos_));
      }
    }

   private:
    Node parse_term() {
      Node lhs = parse_unary();
      for (;;) {
        skip_ws();
        if (peek() == '*' || peek() == '/') {
          char op = advance();
          Node rhs = parse_unary();
          Node n;
          n.kind = op == '*' ? Node::Kind::mul : Node::Kind::div;
          n.children = {std::move(lhs), std::move(rhs)};
          lhs = std::move(n);
        } else {
          return lhs;
        }
      }
    }

    Node parse_unary() {
      skip_ws();
      if (peek() == '-') {
        advance();
        Node n;
        n.kind = Node::Kind::neg;
        n.children = {parse_unary()};
        return n;
      }
      return parse_primary();
    }

    Node parse_primary() {
      skip_ws();
      char c = peek();
      if (c == '(') {
        advance();
        Node inner = parse_expr();
        skip_ws();
        if (peek() != ')') {
          throw Error(ErrorCode::syntax_error,
                      "expected ')' at position " + std::to_string(pos_));
        }
        advance();
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string name = parse_ident();
        skip_ws();
        if (peek() == '(') {
          if (name != "log" && name != "sqrt") {
            throw Error(ErrorCode::unknown_function, "unknown function: " + name);
          }
          advance();
          Node n;
          n.kind = Node::Kind::call;
          n.name = name;
          n.children = {parse_expr()};
          skip_ws();
          if (peek() != ')') {
            throw Error(ErrorCode::syntax_error,
                        "expected ')' at position " + std::to_string(pos_));
          }
          advance();
          return n;
        }
        Node n;
        n.kind = Node::Kind::symbol;
        n.name = name;
        return n;
      }
      throw Error(ErrorCode::syntax_error,
                  pos_ >= text_.size()
                      ? "unexpected end of expression"
                      : "unexpected character '" + std::string(1, c) +
                            "' at position " + std::to_string(pos_));
    }

    Node parse_number() {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E' ||
              ((text_[pos_] == '+' || text_[pos_] == '-') && pos_ > start &&
               (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')))) {
        ++pos_;
      }
      std::string tok = text_.substr(start, pos_ - start);
      char* end = nullptr;
      double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        throw Error(ErrorCode::syntax_error,
                    "bad number '" + tok + "' at position " + std::to_string(start));
      }
      Node n;
      n.kind = Node::Kind::number;
      n.value = v;
      return n;
    }

    std::string parse_ident() {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_' || text_[pos_] == '.')) {
        ++pos_;
      }
      return text_.substr(start, pos_ - start);
    }

    void skip_ws() {
      while (pos_ < text_.size() &&
             std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      }
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    char advance() { return text_[pos_++]; }

    const std::string& text_;
    std::size_t pos_ = 0;
  };
};

}  // namespace margeff
