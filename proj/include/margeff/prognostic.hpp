#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"
#include "margeff/learners.hpp"
#include "margeff/plugin.hpp"

namespace margeff {

// Prognostic model learned from historical control data, carried with the
// adjusted estimate for inspection.
struct PrognosticFit {
  SuperLearnerFit super_learner;
  FormulaAst prog_formula;
  std::size_t historical_n = 0;
  LinkKind link = LinkKind::identity;  // trial GLM link used for the transform
};

struct AdjustedEstimate {
  MarginalEffectEstimate base;
  PrognosticFit prognostic;
  std::string score_column_label;
  std::size_t clamped_count = 0;
};

// Default prognostic formula: same response as the trial model, main
// effects of every other historical column.
inline FormulaAst default_prog_formula(const FormulaAst& trial_formula,
                                       const Dataset& data_hist) {
  if (!data_hist.has_column(trial_formula.response)) {
    throw Error(ErrorCode::response_not_in_hist,
                "historical data lacks response column '" + trial_formula.response + "'");
  }
  FormulaAst out;
  out.response = trial_formula.response;
  for (const auto& name : data_hist.names()) {
    if (name == out.response) continue;
    out.terms.push_back(Term{{Factor{name, Transform::identity}}});
  }
  return out;
}

struct TransformedScores {
  std::vector<double> values;
  std::size_t clamped = 0;
};

// Applies the trial link g elementwise, clamping scores into the link
// domain (logit: [1e-6, 1-1e-6]; log/inverse links: >= 1e-12). More than
// 10% clamped means the prognostic model is grossly incompatible with the
// trial family and is an error.
inline TransformedScores transform_score(const std::vector<double>& scores, Link link) {
  TransformedScores out;
  out.values.reserve(scores.size());
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::nonfinite_value, "non-finite prognostic score");
    }
    double c = s;
    switch (link.kind) {
      case LinkKind::identity: break;
      case LinkKind::logit:
        c = std::min(std::max(s, 1e-6), 1.0 - 1e-6);
        break;
      case LinkKind::log:
      case LinkKind::inverse:
      case LinkKind::inverse_squared:
        c = std::max(s, 1e-12);
        break;
    }
    if (c != s) ++out.clamped;
    out.values.push_back(link.g(c));
  }
  if (!scores.empty() &&
      static_cast<double>(out.clamped) > 0.1 * static_cast<double>(scores.size())) {
    throw Error(ErrorCode::score_clamp_excess,
                std::to_string(out.clamped) + " of " + std::to_string(scores.size()) +
                    " prognostic scores fell outside the link domain");
  }
  return out;
}

struct PrognosticOptions {
  int cv_prog_folds = 5;
  std::vector<LearnerSpec> learners = default_learners();
  EstimateOptions estimate;
};

// Fits the prognostic model on historical controls, scores the trial rows,
// transforms the scores onto the link scale, appends them as one extra
// main-effect covariate and reruns the plug-in estimator.
inline AdjustedEstimate estimate_with_prognostic_score(
    const FormulaAst& formula, const TrialData& trial, const Family& family,
    const EstimandSpec& estimand, const Dataset& data_hist,
    const FormulaAst* prog_formula_opt = nullptr, const PrognosticOptions& opts = {}) {
  if (data_hist.n_rows() == 0) {
    throw Error(ErrorCode::empty_input, "historical data is empty");
  }
  if (data_hist.has_column(trial.exposure)) {
    throw Error(ErrorCode::bad_argument,
                "historical data must hold controls only; drop column '" +
                    trial.exposure + "'");
  }

  AdjustedEstimate out;
  FormulaAst prog_formula = prog_formula_opt
                                ? *prog_formula_opt
                                : default_prog_formula(formula, data_hist);

  out.prognostic.super_learner =
      fit_best_learner(prog_formula, data_hist, opts.cv_prog_folds, opts.learners,
                       derive_stream(opts.estimate.seed, {0x70726f67ULL}));
  out.prognostic.prog_formula = prog_formula;
  out.prognostic.historical_n = data_hist.n_rows();
  out.prognostic.link = canonical_link(family.kind);

  Eigen::VectorXd raw = predict(out.prognostic.super_learner, trial.data);
  std::vector<double> raw_vec(raw.data(), raw.data() + raw.size());
  TransformedScores scores = transform_score(raw_vec, family.link());
  out.clamped_count = scores.clamped;

  std::string label = "prog_score";
  for (int suffix = 1; trial.data.has_column(label); ++suffix) {
    label = "prog_score_" + std::to_string(suffix);
  }
  out.score_column_label = label;

  TrialData adjusted = trial;
  adjusted.data.add_column(label, std::move(scores.values));
  FormulaAst adjusted_formula = formula;
  adjusted_formula.terms.push_back(Term{{Factor{label, Transform::identity}}});

  out.base = estimate_marginal_effect(adjusted_formula, adjusted, family, estimand,
                                      opts.estimate);
  if (label != "prog_score") {
    warn(out.base.warnings, "SCORE_NAME_COLLISION",
         "score column renamed to '" + label + "' to avoid a collision");
  }
  if (scores.clamped > 0) {
    warn(out.base.warnings, "SCORE_CLAMPED",
         std::to_string(scores.clamped) + " prognostic scores clamped into the link domain");
  }
  return out;
}

}  // namespace margeff
