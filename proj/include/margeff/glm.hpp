#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "margeff/errors.hpp"
#include "margeff/family.hpp"
#include "margeff/formula.hpp"

namespace margeff {

struct GlmFit {
  Eigen::VectorXd coefficients;
  Family family;
  Link link;
  std::vector<std::string> design_labels;
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  double dispersion = 1.0;  // Pearson estimate where the family has one
  double nb_theta = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd fitted;   // mu from the final IRLS iteration
  std::vector<double> deviance_trace;  // accepted iterates, non-increasing
  WarningLog warnings;
};

inline double predict_mean(const GlmFit& fit, const Eigen::VectorXd& design_row) {
  if (design_row.size() != fit.coefficients.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "design row has " + std::to_string(design_row.size()) +
                    " entries, fit has " + std::to_string(fit.coefficients.size()) +
                    " coefficients");
  }
  return fit.link.g_inv(design_row.dot(fit.coefficients));
}

inline Eigen::VectorXd predict_mean(const GlmFit& fit, const Eigen::MatrixXd& design) {
  if (design.cols() != fit.coefficients.size()) {
    throw Error(ErrorCode::dimension_mismatch, "design width mismatch in predict_mean");
  }
  Eigen::VectorXd eta = design * fit.coefficients;
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = fit.link.g_inv(eta[i]);
  return mu;
}

// Method-of-moments shape estimate for the negative binomial: solves
// sum (y_i - mu_i)^2 / (mu_i + mu_i^2/theta) = n - n_params by bisection
// in log theta. Data indistinguishable from Poisson has no finite root;
// the estimate then runs into the upper bracket and a warning is due.
inline double estimate_nb_theta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                int n_params = 0) {
  if (y.size() != mu.size() || y.size() == 0) {
    throw Error(ErrorCode::dimension_mismatch, "estimate_nb_theta: length mismatch");
  }
  const double n = static_cast<double>(y.size());
  const double target = n - static_cast<double>(n_params);
  double ss = (y - mu).squaredNorm();
  if (ss <= 0.0) {
    throw Error(ErrorCode::theta_unidentifiable,
                "all residuals are zero; theta is unidentifiable");
  }

  auto pearson = [&](double theta) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double r = y[i] - mu[i];
      acc += r * r / (mu[i] + mu[i] * mu[i] / theta);
    }
    return acc - target;
  };

  double lo = 1e-8, hi = 1e8;
  if (pearson(hi) <= 0.0) return hi;  // at or below Poisson dispersion
  if (pearson(lo) >= 0.0) return lo;
  for (int it = 0; it < 200; ++it) {
    double mid = std::sqrt(lo * hi);
    if (pearson(mid) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi / lo < 1.0 + 1e-10) break;
  }
  return std::sqrt(lo * hi);
}

namespace detail {

struct IrlsOptions {
  double deviance_tolerance = 1e-8;
  int max_iterations = 100;
  int max_halvings = 10;
};

inline double clamp_mean(const Family& family, double mu) {
  const double eps = 1e-10;
  switch (family.kind) {
    case FamilyKind::gaussian: return mu;
    case FamilyKind::binomial: return std::min(std::max(mu, eps), 1.0 - eps);
    default: return std::max(mu, eps);
  }
}

inline bool mean_valid(const Family& family, double mu) {
  if (!std::isfinite(mu)) return false;
  switch (family.kind) {
    case FamilyKind::gaussian: return true;
    case FamilyKind::binomial: return mu > 0.0 && mu < 1.0;
    default: return mu > 0.0;
  }
}

// One IRLS run at fixed theta. Throws on rank deficiency; reports
// convergence status back to the caller.
inline GlmFit irls_core(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Family& family, double theta, const IrlsOptions& opt,
                        const std::vector<std::string>& labels) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < p) {
    throw Error(ErrorCode::bad_argument,
                "need at least as many rows as design columns");
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) {
      throw Error(ErrorCode::rank_deficient, "design matrix is rank deficient");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) family.check_response(y[i]);

  Link link = family.link();
  Eigen::VectorXd mu(n), eta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mu[i] = clamp_mean(family, family.init_mean(y[i]));
    eta[i] = link.g(mu[i]);
  }

  auto total_deviance = [&](const Eigen::VectorXd& m) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += family.unit_deviance(y[i], m[i], theta);
    return acc;
  };

  GlmFit fit;
  fit.family = family;
  fit.link = link;
  fit.design_labels = labels;
  fit.coefficients = Eigen::VectorXd::Zero(p);

  double dev = total_deviance(mu);
  Eigen::VectorXd beta = fit.coefficients;
  bool have_beta = false;

  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    Eigen::VectorXd w(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double d = link.mu_eta(mu[i]);
      double v = family.variance(mu[i], theta);
      double wi = d * d / v;
      w[i] = std::max(wi, 1e-12);
      z[i] = eta[i] + (y[i] - mu[i]) / d;
    }

    Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd xtwz = X.transpose() * w.asDiagonal() * z;
    Eigen::VectorXd beta_new = xtwx.ldlt().solve(xtwz);
    if (!beta_new.allFinite()) {
      throw Error(ErrorCode::non_convergence,
                  "IRLS weighted solve produced non-finite coefficients");
    }

    // Step-halving toward the previous accepted iterate keeps the deviance
    // non-increasing and the mean inside its domain.
    double dev_new = 0.0;
    Eigen::VectorXd eta_new, mu_new;
    int halvings = 0;
    for (;; ++halvings) {
      eta_new = X * beta_new;
      mu_new.resize(n);
      bool valid = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        mu_new[i] = clamp_mean(family, link.g_inv(eta_new[i]));
        if (!mean_valid(family, mu_new[i])) {
          valid = false;
          break;
        }
      }
      if (valid) {
        dev_new = total_deviance(mu_new);
        if (std::isfinite(dev_new) && dev_new <= dev * (1.0 + 1e-12) + 1e-12) break;
      }
      if (!have_beta || halvings >= opt.max_halvings) {
        if (valid && std::isfinite(dev_new) && !have_beta) break;  // first step stands
        throw Error(ErrorCode::non_convergence,
                    "IRLS could not decrease the deviance (step-halving exhausted)");
      }
      beta_new = 0.5 * (beta_new + beta);
    }

    beta = beta_new;
    have_beta = true;
    eta = eta_new;
    mu = mu_new;
    fit.deviance_trace.push_back(dev_new);

    double rel_change = std::abs(dev_new - dev) / (std::abs(dev) + 0.1);
    dev = dev_new;
    if (rel_change < opt.deviance_tolerance) {
      fit.converged = true;
      ++iter;
      break;
    }
  }

  fit.coefficients = beta;
  fit.deviance = dev;
  fit.iterations = iter;
  fit.fitted = mu;
  fit.nb_theta = family.kind == FamilyKind::negative_binomial
                     ? theta
                     : std::numeric_limits<double>::quiet_NaN();

  if (!fit.converged) {
    throw Error(ErrorCode::non_convergence,
                "IRLS did not converge in " + std::to_string(opt.max_iterations) +
                    " iterations");
  }
  if (family.kind == FamilyKind::binomial) {
    // Fitted probabilities numerically at 0 or 1 mean the MLE ran off to
    // the boundary (separation); 18 on the logit scale is probability
    // within ~1.5e-8 of the boundary.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(eta[i]) > 18.0) {
        throw Error(ErrorCode::non_convergence,
                    "fitted probabilities pinned at 0 or 1; data are separated");
      }
    }
  }

  bool has_dispersion = family.kind == FamilyKind::gaussian ||
                        family.kind == FamilyKind::gamma ||
                        family.kind == FamilyKind::inverse_gaussian;
  if (has_dispersion) {
    if (family.dispersion) {
      fit.dispersion = *family.dispersion;
    } else if (n > p) {
      double x2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double r = y[i] - mu[i];
        x2 += r * r / family.variance(mu[i], theta);
      }
      fit.dispersion = x2 / static_cast<double>(n - p);
    }
  }
  return fit;
}

}  // namespace detail

// Maximum-likelihood GLM fit by iteratively reweighted least squares.
// Negative binomial alternates moment updates of theta with IRLS refits
// until both stabilize.
inline GlmFit irls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Family& family,
                       const std::vector<std::string>& labels = {}) {
  detail::IrlsOptions opt;
  if (family.kind != FamilyKind::negative_binomial) {
    return detail::irls_core(X, y, family, 1.0, opt, labels);
  }

  if (family.nb_theta) {
    return detail::irls_core(X, y, family, *family.nb_theta, opt, labels);
  }

  double theta = 1.0;
  GlmFit fit;
  for (int outer = 0; outer < 50; ++outer) {
    fit = detail::irls_core(X, y, family, theta, opt, labels);
    double theta_new = estimate_nb_theta(y, fit.fitted, static_cast<int>(X.cols()));
    double rel = std::abs(theta_new - theta) / std::max(theta, 1e-12);
    theta = theta_new;
    if (rel < 1e-6) break;
  }
  fit = detail::irls_core(X, y, family, theta, opt, labels);
  fit.nb_theta = theta;
  if (theta > 1e3) {
    warn(fit.warnings, "NB_THETA_LARGE",
         "estimated NB theta " + std::to_string(theta) +
             " exceeds 1e3; data look Poisson");
  }
  return fit;
}

inline GlmFit irls_fit(const DesignMatrix& design, const std::vector<double>& y,
                       const Family& family) {
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return irls_fit(design.matrix, yv, family, design.column_labels);
}

}  // namespace margeff
