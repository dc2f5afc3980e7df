#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "margeff/errors.hpp"
#include "margeff/expression.hpp"

namespace margeff {

// A marginal-effect function r(psi1, psi0) with optional closed-form
// partial derivatives and inverse in psi1. Missing pieces fall back to
// central differences / bracketed bisection.
struct EstimandSpec {
  std::string name;
  std::function<double(double psi1, double psi0)> r;
  std::function<double(double psi1, double psi0)> d0;       // dr/dpsi0, may be null
  std::function<double(double psi1, double psi0)> d1;       // dr/dpsi1, may be null
  std::function<double(double target, double psi0)> inverse_in_psi1;  // may be null
  double null_margin = std::numeric_limits<double>::quiet_NaN();

  bool has_margin() const { return std::isfinite(null_margin); }
};

namespace detail {

inline double clamp_unit_interval(double p) {
  const double eps = 1e-12;
  return std::min(std::max(p, eps), 1.0 - eps);
}

}  // namespace detail

inline EstimandSpec builtin_estimand(const std::string& name) {
  EstimandSpec s;
  s.name = name;
  if (name == "ate") {
    s.r = [](double p1, double p0) { return p1 - p0; };
    s.d0 = [](double, double) { return -1.0; };
    s.d1 = [](double, double) { return 1.0; };
    s.inverse_in_psi1 = [](double t, double p0) { return t + p0; };
    s.null_margin = 0.0;
    return s;
  }
  if (name == "rate_ratio") {
    s.r = [](double p1, double p0) { return p1 / p0; };
    s.d0 = [](double p1, double p0) { return -p1 / (p0 * p0); };
    s.d1 = [](double, double p0) { return 1.0 / p0; };
    s.inverse_in_psi1 = [](double t, double p0) { return t * p0; };
    s.null_margin = 1.0;
    return s;
  }
  if (name == "odds_ratio") {
    // Arguments are clamped 1e-12 away from {0, 1}; the caller warns when
    // a counterfactual mean actually falls outside the open interval.
    s.r = [](double p1, double p0) {
      p1 = detail::clamp_unit_interval(p1);
      p0 = detail::clamp_unit_interval(p0);
      return (p1 / (1.0 - p1)) / (p0 / (1.0 - p0));
    };
    s.d0 = [](double p1, double p0) {
      p1 = detail::clamp_unit_interval(p1);
      p0 = detail::clamp_unit_interval(p0);
      return -(p1 / (1.0 - p1)) / (p0 * p0);
    };
    s.d1 = [](double p1, double p0) {
      p1 = detail::clamp_unit_interval(p1);
      p0 = detail::clamp_unit_interval(p0);
      return ((1.0 - p0) / p0) / ((1.0 - p1) * (1.0 - p1));
    };
    s.inverse_in_psi1 = [](double t, double p0) {
      p0 = detail::clamp_unit_interval(p0);
      double q = t * p0 / (1.0 - p0);
      return q / (1.0 + q);
    };
    s.null_margin = 1.0;
    return s;
  }
  throw Error(ErrorCode::unknown_estimand, "unknown estimand: " + name);
}

// Custom estimand from an expression in psi1 and psi0. Derivatives and the
// inverse are numeric; the null margin is left unset.
inline EstimandSpec expression_estimand(const std::string& text) {
  auto expr = Expression::parse(text);
  for (const auto& sym : expr.free_symbols()) {
    if (sym != "psi1" && sym != "psi0") {
      throw Error(ErrorCode::bad_argument,
                  "estimand expression may only use psi1 and psi0, found: " + sym);
    }
  }
  EstimandSpec s;
  s.name = text;
  s.r = [expr](double p1, double p0) {
    return expr.eval({{"psi1", p1}, {"psi0", p0}});
  };
  return s;
}

// Central finite differences with step max(1, |psi|) * cbrt(eps) per
// coordinate. Returns (d0, d1).
inline std::pair<double, double> numeric_derivatives(const EstimandSpec& spec,
                                                     double psi1, double psi0) {
  static const double rel_h = std::cbrt(std::numeric_limits<double>::epsilon());
  auto central = [&](bool wrt_psi1) {
    double x = wrt_psi1 ? psi1 : psi0;
    double h = std::max(1.0, std::abs(x)) * rel_h;
    double up = wrt_psi1 ? spec.r(psi1 + h, psi0) : spec.r(psi1, psi0 + h);
    double dn = wrt_psi1 ? spec.r(psi1 - h, psi0) : spec.r(psi1, psi0 - h);
    if (!std::isfinite(up) || !std::isfinite(dn)) {
      throw Error(ErrorCode::nonfinite_derivative,
                  "estimand function non-finite near (" + std::to_string(psi1) + ", " +
                      std::to_string(psi0) + ")");
    }
    return (up - dn) / (2.0 * h);
  };
  return {central(false), central(true)};
}

// Derivatives at (psi1, psi0): closed form when provided, else numeric.
inline std::pair<double, double> estimand_derivatives(const EstimandSpec& spec,
                                                      double psi1, double psi0) {
  if (spec.d0 && spec.d1) {
    double v0 = spec.d0(psi1, psi0);
    double v1 = spec.d1(psi1, psi0);
    if (!std::isfinite(v0) || !std::isfinite(v1)) {
      throw Error(ErrorCode::nonfinite_derivative, "closed-form derivative non-finite");
    }
    return {v0, v1};
  }
  return numeric_derivatives(spec, psi1, psi0);
}

// The sign condition d0 <= 0 <= d1 is assumed, not enforced; violations
// warn and estimation proceeds.
inline void check_sign_condition(const EstimandSpec& spec, double psi1, double psi0,
                                 WarningLog& log) {
  auto [d0, d1] = estimand_derivatives(spec, psi1, psi0);
  const double slack = 1e-8 * std::max({1.0, std::abs(d0), std::abs(d1)});
  if (d0 > slack || d1 < -slack) {
    warn(log, "SIGN_CONDITION",
         "estimand derivatives violate d0 <= 0 <= d1 at the evaluation point");
  }
}

// Solves r(psi1, psi0) = target for psi1, assuming monotone non-decreasing
// r in psi1. Uses the closed-form inverse when available; otherwise
// geometric bracket expansion from psi0 followed by bisection. The result
// is always residual-checked against the tolerance.
inline double solve_psi1(const EstimandSpec& spec, double target, double psi0,
                         double tolerance = 1e-6) {
  const double tol_abs = tolerance * std::max(1.0, std::abs(target));

  auto residual = [&](double psi1) {
    double v;
    try {
      v = spec.r(psi1, psi0) - target;
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
  };

  auto verified = [&](double psi1) {
    double res = residual(psi1);
    if (!(std::abs(res) <= tol_abs)) {
      throw Error(ErrorCode::tolerance_fail,
                  "psi1 inversion residual " + std::to_string(res) +
                      " exceeds tolerance " + std::to_string(tol_abs));
    }
    return psi1;
  };

  if (spec.inverse_in_psi1) {
    return verified(spec.inverse_in_psi1(target, psi0));
  }

  double a = psi0;
  double fa = residual(a);
  if (std::isnan(fa)) {
    throw Error(ErrorCode::bracket_fail, "estimand non-finite at psi1 = psi0");
  }
  if (std::abs(fa) <= tol_abs) return a;

  const double dir = fa < 0.0 ? 1.0 : -1.0;
  double step = 0.5 * std::max(1.0, std::abs(psi0));
  double b = a, fb = fa;
  bool bracketed = false;
  for (int k = 0; k < 60 && !bracketed; ++k) {
    double cand = a + dir * step;
    double fc = residual(cand);
    if (std::isnan(fc)) {
      // Ran off the domain; pull back to the farthest finite point.
      double lo = a, hi = cand;
      for (int j = 0; j < 80; ++j) {
        double mid = 0.5 * (lo + hi);
        if (std::isnan(residual(mid))) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      cand = lo;
      fc = residual(cand);
      if (std::isnan(fc) || (fc < 0.0) == (fa < 0.0)) {
        throw Error(ErrorCode::bracket_fail,
                    "target not attainable within the estimand domain");
      }
    }
    if ((fc < 0.0) != (fa < 0.0) || fc == 0.0) {
      b = cand;
      fb = fc;
      bracketed = true;
    } else {
      a = cand;
      fa = fc;
      step *= 2.0;
    }
  }
  if (!bracketed) {
    throw Error(ErrorCode::bracket_fail,
                "bracket expansion failed after 60 doublings");
  }

  double lo = std::min(a, b), hi = std::max(a, b);
  double flo = lo == a ? fa : fb;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = residual(mid);
    if (std::isnan(fm)) fm = flo;  // stay on the finite side
    if (std::abs(fm) <= tol_abs) return verified(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(lo))) break;
  }
  return verified(0.5 * (lo + hi));
}

}  // namespace margeff
