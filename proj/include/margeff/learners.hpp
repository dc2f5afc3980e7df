#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"
#include "margeff/forest.hpp"
#include "margeff/formula.hpp"
#include "margeff/rng.hpp"

namespace margeff {

enum class LearnerKind { ols, ridge, knn, random_forest };

inline const char* learner_kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::ols: return "ols";
    case LearnerKind::ridge: return "ridge";
    case LearnerKind::knn: return "knn";
    case LearnerKind::random_forest: return "random_forest";
  }
  return "?";
}

inline LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "ols" || s == "linear") return LearnerKind::ols;
  if (s == "ridge") return LearnerKind::ridge;
  if (s == "knn") return LearnerKind::knn;
  if (s == "random_forest" || s == "rf" || s == "forest") return LearnerKind::random_forest;
  throw Error(ErrorCode::bad_argument, "unknown learner kind: " + s);
}

// One hyperparameter setting; fields are read per learner kind.
struct LearnerParams {
  double lambda = 1.0;  // ridge penalty
  int k = 5;            // knn neighborhood size
  int min_node = 5;     // forest child-size floor
  int trees = 500;      // forest size, fixed rather than tuned
};

struct LearnerSpec {
  std::string name;
  LearnerKind kind = LearnerKind::ols;
  std::vector<LearnerParams> hyper_grid;  // non-empty
};

inline void validate_learner_spec(const LearnerSpec& spec) {
  if (spec.hyper_grid.empty()) {
    throw Error(ErrorCode::bad_hyperparameter,
                "learner " + spec.name + " has an empty hyper grid");
  }
  for (const auto& p : spec.hyper_grid) {
    if (p.lambda < 0.0 || p.k < 1 || p.min_node < 1 || p.trees < 1) {
      throw Error(ErrorCode::bad_hyperparameter,
                  "learner " + spec.name + " has a hyperparameter out of range");
    }
  }
}

// Fitted regression model mapping covariate rows to real predictions.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual Eigen::VectorXd predict(const Dataset& data) const = 0;
};

namespace detail {

// Covariate feature matrix for distance/tree learners: the design without
// its intercept column.
inline Eigen::MatrixXd feature_matrix(const FormulaAst& formula, const Dataset& data) {
  DesignMatrix design = build_design(formula, data);
  return design.matrix.rightCols(design.matrix.cols() - 1);
}

inline Eigen::VectorXd response_vector(const FormulaAst& formula, const Dataset& data) {
  const auto& y = data.col(formula.response);
  return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

class OlsModel final : public Regressor {
 public:
  OlsModel(const FormulaAst& formula, const Dataset& data) : formula_(formula) {
    DesignMatrix design = build_design(formula, data);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.matrix);
    if (qr.rank() < design.matrix.cols()) {
      throw Error(ErrorCode::singular_design, "ols: design matrix is singular");
    }
    coef_ = qr.solve(response_vector(formula, data));
  }

  Eigen::VectorXd predict(const Dataset& data) const override {
    DesignMatrix design = build_design(formula_, data);
    return design.matrix * coef_;
  }

 private:
  FormulaAst formula_;
  Eigen::VectorXd coef_;
};

// Ridge on internally standardized features, intercept unpenalized.
class RidgeModel final : public Regressor {
 public:
  RidgeModel(const FormulaAst& formula, const Dataset& data, double lambda)
      : formula_(formula), lambda_(lambda) {
    Eigen::MatrixXd x = feature_matrix(formula, data);
    Eigen::VectorXd y = response_vector(formula, data);
    standardize_fit(x);
    Eigen::MatrixXd z = apply_standardize(x);
    y_mean_ = y.mean();
    Eigen::MatrixXd gram = z.transpose() * z;
    gram.diagonal().array() += lambda;
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
      if (qr.rank() < gram.cols()) {
        throw Error(ErrorCode::singular_design, "ridge with lambda = 0: singular design");
      }
    }
    coef_ = gram.ldlt().solve(z.transpose() * (y.array() - y_mean_).matrix());
  }

  Eigen::VectorXd predict(const Dataset& data) const override {
    Eigen::MatrixXd z = apply_standardize(feature_matrix(formula_, data));
    return (z * coef_).array() + y_mean_;
  }

 private:
  void standardize_fit(const Eigen::MatrixXd& x) {
    mean_ = x.colwise().mean();
    sd_.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double v = (x.col(j).array() - mean_[j]).matrix().squaredNorm() /
                 std::max<double>(1.0, static_cast<double>(x.rows() - 1));
      sd_[j] = std::sqrt(v);
    }
  }

  Eigen::MatrixXd apply_standardize(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (sd_[j] > 0.0) {
        z.col(j) = (x.col(j).array() - mean_[j]) / sd_[j];
      } else {
        z.col(j).setZero();  // constant feature carries no signal
      }
    }
    return z;
  }

  FormulaAst formula_;
  double lambda_;
  Eigen::VectorXd mean_, sd_, coef_;
  double y_mean_ = 0.0;
};

class KnnModel final : public Regressor {
 public:
  KnnModel(const FormulaAst& formula, const Dataset& data, int k)
      : formula_(formula), k_(k) {
    x_ = feature_matrix(formula, data);
    y_ = response_vector(formula, data);
    if (k_ > x_.rows()) {
      throw Error(ErrorCode::bad_hyperparameter,
                  "knn: k = " + std::to_string(k_) + " exceeds n = " +
                      std::to_string(x_.rows()));
    }
    mean_ = x_.colwise().mean();
    sd_.resize(x_.cols());
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      double v = (x_.col(j).array() - mean_[j]).matrix().squaredNorm() /
                 std::max<double>(1.0, static_cast<double>(x_.rows() - 1));
      sd_[j] = std::sqrt(v);
      if (sd_[j] <= 0.0) sd_[j] = 1.0;
    }
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      x_.col(j) = (x_.col(j).array() - mean_[j]) / sd_[j];
    }
  }

  Eigen::VectorXd predict(const Dataset& data) const override {
    Eigen::MatrixXd q = feature_matrix(formula_, data);
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      q.col(j) = (q.col(j).array() - mean_[j]) / sd_[j];
    }
    Eigen::VectorXd out(q.rows());
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(x_.rows()));
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (Eigen::Index t = 0; t < x_.rows(); ++t) {
        dist[static_cast<std::size_t>(t)] = {(x_.row(t) - q.row(i)).squaredNorm(), t};
      }
      // index tie-break keeps predictions independent of sort internals
      std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
      double acc = 0.0;
      for (int m = 0; m < k_; ++m) acc += y_[dist[static_cast<std::size_t>(m)].second];
      out[i] = acc / static_cast<double>(k_);
    }
    return out;
  }

 private:
  FormulaAst formula_;
  int k_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_, mean_, sd_;
};

class ForestModel final : public Regressor {
 public:
  ForestModel(const FormulaAst& formula, const Dataset& data, const LearnerParams& params,
              std::uint64_t seed)
      : formula_(formula) {
    RandomForest::Options opt;
    opt.n_trees = params.trees;
    opt.min_node = params.min_node;
    opt.seed = seed;
    forest_.fit(feature_matrix(formula, data), response_vector(formula, data), opt);
  }

  Eigen::VectorXd predict(const Dataset& data) const override {
    return forest_.predict(feature_matrix(formula_, data));
  }

 private:
  FormulaAst formula_;
  RandomForest forest_;
};

}  // namespace detail

inline std::unique_ptr<Regressor> fit_learner(const LearnerSpec& spec,
                                              const LearnerParams& params,
                                              const FormulaAst& formula,
                                              const Dataset& data, std::uint64_t seed) {
  if (data.n_rows() == 0) {
    throw Error(ErrorCode::empty_input, "cannot fit a learner on empty data");
  }
  switch (spec.kind) {
    case LearnerKind::ols:
      return std::make_unique<detail::OlsModel>(formula, data);
    case LearnerKind::ridge:
      return std::make_unique<detail::RidgeModel>(formula, data, params.lambda);
    case LearnerKind::knn:
      return std::make_unique<detail::KnnModel>(formula, data, params.k);
    case LearnerKind::random_forest:
      return std::make_unique<detail::ForestModel>(formula, data, params, seed);
  }
  throw Error(ErrorCode::bad_argument, "unknown learner kind");
}

struct CvEntry {
  std::string learner_name;
  LearnerKind kind = LearnerKind::ols;
  int setting_index = 0;
  LearnerParams params;
  double mean_rmse = 0.0;
};

struct SuperLearnerFit {
  std::shared_ptr<const Regressor> winner;
  std::string winner_name;
  LearnerKind winner_kind = LearnerKind::ols;
  LearnerParams winner_hypers;
  std::vector<CvEntry> cv_table;
  int cv_folds = 5;
  FormulaAst formula;
  std::size_t training_rows = 0;
  std::vector<std::string> training_columns;
  WarningLog warnings;
};

// Plain (unstratified) fold assignment; a pure function of (seed, n, folds).
inline std::vector<int> plain_folds(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(derive_stream(seed, {0x736c666bULL}));
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(rows[i - 1], rows[j]);
  }
  std::vector<int> assignment(n);
  for (std::size_t k = 0; k < n; ++k) {
    assignment[rows[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  return assignment;
}

// Discrete super learner: exhaustive K-fold CV over every (learner,
// setting) candidate with a shared fold assignment, winner selected by
// lowest mean held-out RMSE and refit on all rows. Candidates that fail
// on any fold score +inf instead of aborting the search.
inline SuperLearnerFit fit_best_learner(const FormulaAst& formula, const Dataset& data,
                                        int cv_folds,
                                        const std::vector<LearnerSpec>& learners,
                                        std::uint64_t seed) {
  if (cv_folds < 2) {
    throw Error(ErrorCode::bad_argument, "cv_folds must be >= 2");
  }
  if (data.n_rows() < 2 * static_cast<std::size_t>(cv_folds)) {
    throw Error(ErrorCode::bad_argument,
                "need at least 2*cv_folds rows, got " + std::to_string(data.n_rows()));
  }
  if (learners.empty()) {
    throw Error(ErrorCode::bad_argument, "learner list must be non-empty");
  }
  for (const auto& spec : learners) validate_learner_spec(spec);

  SuperLearnerFit out;
  out.cv_folds = cv_folds;
  out.formula = formula;
  out.training_rows = data.n_rows();
  out.training_columns = data.names();

  const std::vector<int> fold_of = plain_folds(data.n_rows(), cv_folds, seed);
  std::vector<Dataset> train_parts, val_parts;
  std::vector<Eigen::VectorXd> val_y;
  for (int f = 0; f < cv_folds; ++f) {
    std::vector<std::size_t> train_rows, val_rows;
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
      (fold_of[i] == f ? val_rows : train_rows).push_back(i);
    }
    train_parts.push_back(data.subset(train_rows));
    val_parts.push_back(data.subset(val_rows));
    val_y.push_back(detail::response_vector(formula, val_parts.back()));
  }

  for (std::size_t li = 0; li < learners.size(); ++li) {
    const LearnerSpec& spec = learners[li];
    for (std::size_t si = 0; si < spec.hyper_grid.size(); ++si) {
      CvEntry entry;
      entry.learner_name = spec.name;
      entry.kind = spec.kind;
      entry.setting_index = static_cast<int>(si);
      entry.params = spec.hyper_grid[si];

      double rmse_sum = 0.0;
      bool failed = false;
      for (int f = 0; f < cv_folds && !failed; ++f) {
        try {
          auto model = fit_learner(spec, entry.params, formula,
                                   train_parts[static_cast<std::size_t>(f)],
                                   derive_stream(seed, {0x66697466ULL, li, si,
                                                        static_cast<std::uint64_t>(f)}));
          Eigen::VectorXd pred = model->predict(val_parts[static_cast<std::size_t>(f)]);
          rmse_sum += std::sqrt(
              (pred - val_y[static_cast<std::size_t>(f)]).squaredNorm() /
              static_cast<double>(pred.size()));
        } catch (const Error& e) {
          failed = true;
          warn(out.warnings, "CANDIDATE_FAILED",
               spec.name + "[" + std::to_string(si) + "] failed on fold " +
                   std::to_string(f) + ": " + e.what());
        }
      }
      entry.mean_rmse = failed ? std::numeric_limits<double>::infinity()
                               : rmse_sum / static_cast<double>(cv_folds);
      out.cv_table.push_back(std::move(entry));
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < out.cv_table.size(); ++i) {
    if (out.cv_table[i].mean_rmse < out.cv_table[best].mean_rmse) best = i;
  }
  const CvEntry& win = out.cv_table[best];
  if (std::isinf(win.mean_rmse)) {
    throw Error(ErrorCode::bad_argument, "every learner candidate failed CV fitting");
  }

  std::size_t win_li = 0;
  for (std::size_t li = 0, idx = 0; li < learners.size(); ++li) {
    for (std::size_t si = 0; si < learners[li].hyper_grid.size(); ++si, ++idx) {
      if (idx == best) win_li = li;
    }
  }
  out.winner_name = win.learner_name;
  out.winner_kind = win.kind;
  out.winner_hypers = win.params;
  out.winner = fit_learner(learners[win_li], win.params, formula, data,
                           derive_stream(seed, {0x72656669ULL, best}));
  return out;
}

inline Eigen::VectorXd predict(const SuperLearnerFit& fit, const Dataset& new_data) {
  Eigen::VectorXd out = fit.winner->predict(new_data);
  if (!out.allFinite()) {
    throw Error(ErrorCode::nonfinite_value, "learner produced non-finite predictions");
  }
  return out;
}

// Default candidate list: a random forest over a small min-node grid plus
// an unpenalized linear model.
inline std::vector<LearnerSpec> default_learners() {
  LearnerSpec rf;
  rf.name = "rf";
  rf.kind = LearnerKind::random_forest;
  for (int m = 1; m <= 10; ++m) {
    LearnerParams p;
    p.min_node = m;
    p.trees = 500;
    rf.hyper_grid.push_back(p);
  }
  LearnerSpec lm;
  lm.name = "lm";
  lm.kind = LearnerKind::ols;
  lm.hyper_grid.push_back(LearnerParams{});
  return {rf, lm};
}

}  // namespace margeff
