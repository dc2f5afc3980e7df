#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"
#include "margeff/estimand.hpp"
#include "margeff/formula.hpp"
#include "margeff/glm.hpp"
#include "margeff/normal.hpp"
#include "margeff/rng.hpp"

namespace margeff {

// Two-arm randomized-trial data: outcome Y, 0/1 exposure A, covariates,
// and the known randomization probability pi1 = P(A = 1).
struct TrialData {
  Dataset data;
  std::string outcome;
  std::string exposure;
  double exposure_prob = 0.5;  // pi1; pi0 = 1 - pi1
  std::size_t n = 0, n1 = 0, n0 = 0;
};

inline TrialData make_trial_data(Dataset data, const std::string& outcome,
                                 const std::string& exposure, double exposure_prob) {
  if (!(exposure_prob > 0.0 && exposure_prob < 1.0)) {
    throw Error(ErrorCode::bad_argument, "exposure_prob must be in (0, 1)");
  }
  TrialData t;
  t.outcome = outcome;
  t.exposure = exposure;
  t.exposure_prob = exposure_prob;
  const auto& a = data.col(exposure);
  (void)data.col(outcome);
  t.n = data.n_rows();
  for (double v : a) {
    if (v == 1.0) {
      ++t.n1;
    } else if (v == 0.0) {
      ++t.n0;
    } else {
      throw Error(ErrorCode::exposure_not_binary,
                  "exposure column contains value " + std::to_string(v) +
                      "; entries must be exactly 0 or 1");
    }
  }
  if (t.n1 == 0 || t.n0 == 0) {
    throw Error(ErrorCode::single_arm, "both treatment arms must be non-empty");
  }
  t.data = std::move(data);
  return t;
}

struct InfluenceComponents {
  Eigen::VectorXd phi0, phi1;
};

struct MarginalEffectEstimate {
  double psi0_hat = 0.0, psi1_hat = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0, ci_high = 0.0, ci_level = 0.95;
  Eigen::VectorXd if_values;
  bool cv_used = false;
  GlmFit glm;
  EstimandSpec estimand;
  std::size_t n = 0;
  WarningLog warnings;
};

namespace detail {

// mu-hat(a, W_i) for every subject under both counterfactual assignments.
// The design is rebuilt with A overwritten so interactions and transforms
// involving A are recomputed.
struct CounterfactualMeans {
  Eigen::VectorXd mu0, mu1;
};

inline CounterfactualMeans counterfactual_predictions(const GlmFit& fit,
                                                      const FormulaAst& formula,
                                                      const TrialData& trial) {
  if (!formula.references(trial.exposure)) {
    throw Error(ErrorCode::exposure_not_in_formula,
                "exposure '" + trial.exposure + "' does not appear in the formula");
  }
  CounterfactualMeans out;
  for (int a = 0; a <= 1; ++a) {
    Dataset cf = trial.data.with_constant_column(trial.exposure, static_cast<double>(a));
    DesignMatrix design = build_design(formula, cf);
    Eigen::VectorXd mu = predict_mean(fit, design.matrix);
    (a == 0 ? out.mu0 : out.mu1) = std::move(mu);
  }
  return out;
}

}  // namespace detail

inline std::pair<double, double> counterfactual_means(const GlmFit& fit,
                                                      const FormulaAst& formula,
                                                      const TrialData& trial) {
  auto cf = detail::counterfactual_predictions(fit, formula, trial);
  return {cf.mu0.mean(), cf.mu1.mean()};
}

// phi_a(A_i, W_i, Y_i) = I(A_i = a)/pi_a (Y_i - mu(a, W_i)) + (mu(a, W_i) - Psi_a),
// evaluated with the user-supplied randomization probabilities.
inline InfluenceComponents influence_components(const GlmFit& fit,
                                                const FormulaAst& formula,
                                                const TrialData& trial,
                                                double psi0_hat, double psi1_hat) {
  auto cf = detail::counterfactual_predictions(fit, formula, trial);
  const auto& y = trial.data.col(trial.outcome);
  const auto& a = trial.data.col(trial.exposure);
  const double pi1 = trial.exposure_prob;
  const double pi0 = 1.0 - pi1;
  const Eigen::Index n = cf.mu0.size();

  InfluenceComponents out;
  out.phi0.resize(n);
  out.phi1.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    double ind1 = a[u] == 1.0 ? 1.0 : 0.0;
    out.phi0[i] = (1.0 - ind1) / pi0 * (y[u] - cf.mu0[i]) + (cf.mu0[i] - psi0_hat);
    out.phi1[i] = ind1 / pi1 * (y[u] - cf.mu1[i]) + (cf.mu1[i] - psi1_hat);
  }
  return out;
}

// v-hat_inf^2 = mean of (d0 phi0 + d1 phi1)^2, uncentered.
inline std::pair<double, Eigen::VectorXd> if_variance(const InfluenceComponents& comp,
                                                      const EstimandSpec& estimand,
                                                      double psi0_hat, double psi1_hat) {
  auto [d0, d1] = estimand_derivatives(estimand, psi1_hat, psi0_hat);
  Eigen::VectorXd values = d0 * comp.phi0 + d1 * comp.phi1;
  double v = values.squaredNorm() / static_cast<double>(values.size());
  return {v, std::move(values)};
}

// Arm-stratified fold assignment; a pure function of (seed, arm sizes,
// fold count) and the row order of the data.
inline std::vector<int> stratified_folds(const std::vector<double>& exposure,
                                         int folds, std::uint64_t seed) {
  std::vector<int> assignment(exposure.size(), -1);
  for (int arm = 0; arm <= 1; ++arm) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < exposure.size(); ++i) {
      if (exposure[i] == static_cast<double>(arm)) rows.push_back(i);
    }
    Rng rng(derive_stream(seed, {0x666f6c64ULL, static_cast<std::uint64_t>(arm)}));
    for (std::size_t i = rows.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
      if (j >= i) j = i - 1;
      std::swap(rows[i - 1], rows[j]);
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      assignment[rows[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    }
  }
  return assignment;
}

// Cross-fitted influence values: for each fold the GLM is fit on the
// training part and phi plus the fold-level counterfactual means are
// computed on the validation part. The pooled values are summarized by
// their centered sample variance.
inline std::pair<double, Eigen::VectorXd> cv_if_variance(
    const FormulaAst& formula, const TrialData& trial, const Family& family,
    const EstimandSpec& estimand, int folds, std::uint64_t seed) {
  if (folds < 2) {
    throw Error(ErrorCode::bad_argument, "cv_variance_folds must be >= 2");
  }
  const auto& exposure = trial.data.col(trial.exposure);
  std::vector<int> fold_of = stratified_folds(exposure, folds, seed);

  Eigen::VectorXd pooled(static_cast<Eigen::Index>(trial.n));
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, val_rows;
    std::size_t train_n1 = 0, train_n0 = 0;
    for (std::size_t i = 0; i < trial.n; ++i) {
      if (fold_of[i] == f) {
        val_rows.push_back(i);
      } else {
        train_rows.push_back(i);
        (exposure[i] == 1.0 ? train_n1 : train_n0)++;
      }
    }
    if (val_rows.empty()) {
      throw Error(ErrorCode::fold_too_small,
                  "fold " + std::to_string(f) + " has an empty validation set");
    }
    if (train_n1 == 0 || train_n0 == 0) {
      throw Error(ErrorCode::fold_arm_imbalance,
                  "fold " + std::to_string(f) + " training data lost an arm");
    }

    TrialData train;
    train.data = trial.data.subset(train_rows);
    train.outcome = trial.outcome;
    train.exposure = trial.exposure;
    train.exposure_prob = trial.exposure_prob;
    train.n = train_rows.size();
    train.n1 = train_n1;
    train.n0 = train_n0;

    DesignMatrix design = build_design(formula, train.data);
    GlmFit fit = irls_fit(design, train.data.col(train.outcome), family);

    TrialData val;
    val.data = trial.data.subset(val_rows);
    val.outcome = trial.outcome;
    val.exposure = trial.exposure;
    val.exposure_prob = trial.exposure_prob;
    val.n = val_rows.size();

    auto cf = detail::counterfactual_predictions(fit, formula, val);
    double psi0_f = cf.mu0.mean();
    double psi1_f = cf.mu1.mean();
    auto [d0, d1] = estimand_derivatives(estimand, psi1_f, psi0_f);

    const auto& yv = val.data.col(val.outcome);
    const auto& av = val.data.col(val.exposure);
    const double pi1 = trial.exposure_prob, pi0 = 1.0 - pi1;
    for (std::size_t k = 0; k < val_rows.size(); ++k) {
      Eigen::Index ke = static_cast<Eigen::Index>(k);
      double ind1 = av[k] == 1.0 ? 1.0 : 0.0;
      double phi0 = (1.0 - ind1) / pi0 * (yv[k] - cf.mu0[ke]) + (cf.mu0[ke] - psi0_f);
      double phi1 = ind1 / pi1 * (yv[k] - cf.mu1[ke]) + (cf.mu1[ke] - psi1_f);
      pooled[static_cast<Eigen::Index>(val_rows[k])] = d0 * phi0 + d1 * phi1;
    }
  }

  double mean = pooled.mean();
  double v = (pooled.array() - mean).matrix().squaredNorm() /
             static_cast<double>(pooled.size() - 1);
  return {v, std::move(pooled)};
}

struct EstimateOptions {
  bool cv_variance = false;
  int cv_variance_folds = 10;
  double ci_level = 0.95;
  std::uint64_t seed = 1;
};

// The full plug-in procedure: MLE fit, counterfactual means, estimand
// plug-in, and influence-function variance (in-sample or cross-fitted).
inline MarginalEffectEstimate estimate_marginal_effect(
    const FormulaAst& formula, const TrialData& trial, const Family& family,
    const EstimandSpec& estimand, const EstimateOptions& opts = {}) {
  MarginalEffectEstimate out;
  out.estimand = estimand;
  out.ci_level = opts.ci_level;
  out.n = trial.n;

  double empirical = static_cast<double>(trial.n1) / static_cast<double>(trial.n);
  if (std::abs(empirical - trial.exposure_prob) > 0.1) {
    warn(out.warnings, "PI_MISMATCH",
         "empirical treated fraction " + std::to_string(empirical) +
             " differs from exposure_prob " + std::to_string(trial.exposure_prob) +
             " by more than 0.1");
  }

  if (!formula.references(trial.exposure)) {
    throw Error(ErrorCode::exposure_not_in_formula,
                "exposure '" + trial.exposure + "' does not appear in the formula");
  }

  DesignMatrix design = build_design(formula, trial.data);
  out.glm = irls_fit(design, trial.data.col(trial.outcome), family);
  for (const auto& w : out.glm.warnings) out.warnings.push_back(w);

  auto cf = detail::counterfactual_predictions(out.glm, formula, trial);
  out.psi0_hat = cf.mu0.mean();
  out.psi1_hat = cf.mu1.mean();
  out.estimate = estimand.r(out.psi1_hat, out.psi0_hat);

  if (estimand.name == "odds_ratio") {
    for (double p : {out.psi0_hat, out.psi1_hat}) {
      if (p <= 1e-12 || p >= 1.0 - 1e-12) {
        warn(out.warnings, "ODDS_RATIO_CLAMP",
             "counterfactual mean clamped into (0, 1) for odds-ratio evaluation");
      }
    }
  }
  check_sign_condition(estimand, out.psi1_hat, out.psi0_hat, out.warnings);

  double v_inf_sq = 0.0;
  if (opts.cv_variance) {
    auto [v, values] = cv_if_variance(formula, trial, family, estimand,
                                      opts.cv_variance_folds, opts.seed);
    v_inf_sq = v;
    out.if_values = std::move(values);
    out.cv_used = true;
  } else {
    InfluenceComponents comp =
        influence_components(out.glm, formula, trial, out.psi0_hat, out.psi1_hat);
    auto [v, values] = if_variance(comp, estimand, out.psi0_hat, out.psi1_hat);
    v_inf_sq = v;
    out.if_values = std::move(values);
  }

  out.std_error = std::sqrt(v_inf_sq / static_cast<double>(trial.n));
  double z = normal_quantile(0.5 + opts.ci_level / 2.0);
  out.ci_low = out.estimate - z * out.std_error;
  out.ci_high = out.estimate + z * out.std_error;
  return out;
}

}  // namespace margeff
