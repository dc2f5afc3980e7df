#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "margeff/learners.hpp"
#include "margeff/simulate.hpp"

using namespace margeff;

namespace {

Dataset linear_data(std::size_t n, std::uint64_t seed) {
  SimSpec spec;
  spec.predictor = "b0+b1*X";
  spec.coefficients = {{"b0", 0.0}, {"b1", 2.0}};
  spec.variables.push_back({"X", VarGen::uniform(0.0, 5.0)});
  spec.gaussian_sd = 0.0;  // exact line
  spec.n = n;
  spec.seed = seed;
  return glm_data(spec);
}

Dataset log_data(std::size_t n, std::uint64_t seed, double noise_sd = 1.0) {
  SimSpec spec;
  spec.predictor = "b0+b1*log(X)";
  spec.coefficients = {{"b0", 1.0}, {"b1", 3.0}};
  spec.variables.push_back({"X", VarGen::uniform(1.0, 50.0)});
  spec.gaussian_sd = noise_sd;
  spec.n = n;
  spec.seed = seed;
  return glm_data(spec);
}

LearnerSpec make_spec(const std::string& name, LearnerKind kind, LearnerParams p) {
  LearnerSpec s;
  s.name = name;
  s.kind = kind;
  s.hyper_grid = {p};
  return s;
}

Dataset x_only(std::vector<double> x) {
  Dataset d;
  std::vector<double> y(x.size(), 0.0);
  d.add_column("Y", y);
  d.add_column("X", std::move(x));
  return d;
}

double rmse(const Eigen::VectorXd& pred, const std::vector<double>& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    double e = pred[i] - y[static_cast<std::size_t>(i)];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

}  // namespace

TEST_CASE("ols interpolates exactly linear data") {
  Dataset data = linear_data(50, 1);
  auto model = fit_learner(make_spec("lm", LearnerKind::ols, {}), {},
                           parse_formula("Y ~ X"), data, 1);
  Eigen::VectorXd pred = model->predict(x_only({3.0}));
  CHECK(pred[0] == Catch::Approx(6.0).margin(1e-8));
}

TEST_CASE("knn with k = n predicts the grand mean") {
  Dataset data = log_data(40, 2);
  LearnerParams p;
  p.k = 40;
  auto model = fit_learner(make_spec("knn", LearnerKind::knn, p), p,
                           parse_formula("Y ~ X"), data, 1);
  double ybar = 0.0;
  for (double v : data.col("Y")) ybar += v;
  ybar /= 40.0;
  Eigen::VectorXd pred = model->predict(x_only({3.0, 20.0}));
  CHECK(pred[0] == Catch::Approx(ybar).margin(1e-10));
  CHECK(pred[1] == Catch::Approx(ybar).margin(1e-10));
}

TEST_CASE("huge ridge penalty shrinks to the intercept-only mean") {
  Dataset data = linear_data(50, 3);
  LearnerParams p;
  p.lambda = 1e12;
  auto model = fit_learner(make_spec("ridge", LearnerKind::ridge, p), p,
                           parse_formula("Y ~ X"), data, 1);
  double ybar = 0.0;
  for (double v : data.col("Y")) ybar += v;
  ybar /= 50.0;
  Eigen::VectorXd pred = model->predict(x_only({0.0, 5.0}));
  CHECK(pred[0] == Catch::Approx(ybar).margin(1e-6));
  CHECK(pred[1] == Catch::Approx(ybar).margin(1e-6));
}

TEST_CASE("singular designs error for ols and unpenalized ridge") {
  Dataset d;
  d.add_column("Y", {1.0, 2.0, 3.0, 4.0});
  d.add_column("X1", {1.0, 2.0, 3.0, 4.0});
  d.add_column("X2", {2.0, 4.0, 6.0, 8.0});  // collinear
  FormulaAst f = parse_formula("Y ~ X1 + X2");
  CHECK_THROWS_AS(fit_learner(make_spec("lm", LearnerKind::ols, {}), {}, f, d, 1), Error);
  LearnerParams zero;
  zero.lambda = 0.0;
  CHECK_THROWS_AS(
      fit_learner(make_spec("ridge", LearnerKind::ridge, zero), zero, f, d, 1), Error);
  LearnerParams pos;
  pos.lambda = 0.5;
  CHECK_NOTHROW(fit_learner(make_spec("ridge", LearnerKind::ridge, pos), pos, f, d, 1));
}

TEST_CASE("knn k greater than n is a hyperparameter error") {
  Dataset data = linear_data(10, 4);
  LearnerParams p;
  p.k = 11;
  try {
    fit_learner(make_spec("knn", LearnerKind::knn, p), p, parse_formula("Y ~ X"), data, 1);
    FAIL("expected hyperparameter error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::bad_hyperparameter);
  }
}

TEST_CASE("forest fits are deterministic given the seed") {
  Dataset data = log_data(300, 5);
  LearnerParams p;
  p.trees = 60;
  p.min_node = 5;
  FormulaAst f = parse_formula("Y ~ X");
  auto a = fit_learner(make_spec("rf", LearnerKind::random_forest, p), p, f, data, 99);
  auto b = fit_learner(make_spec("rf", LearnerKind::random_forest, p), p, f, data, 99);
  auto c = fit_learner(make_spec("rf", LearnerKind::random_forest, p), p, f, data, 100);
  Dataset grid = x_only({2.0, 10.0, 25.0, 49.0});
  Eigen::VectorXd pa = a->predict(grid), pb = b->predict(grid), pc = c->predict(grid);
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pa - pc).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("forest tracks a smooth nonlinear signal") {
  Dataset data = log_data(800, 6, 0.3);
  LearnerParams p;
  p.trees = 150;
  p.min_node = 5;
  auto model = fit_learner(make_spec("rf", LearnerKind::random_forest, p), p,
                           parse_formula("Y ~ X"), data, 7);
  Dataset grid = x_only({5.0, 15.0, 30.0, 45.0});
  Eigen::VectorXd pred = model->predict(grid);
  for (int i = 0; i < 4; ++i) {
    double truth = 1.0 + 3.0 * std::log(grid.col("X")[static_cast<std::size_t>(i)]);
    CHECK(pred[i] == Catch::Approx(truth).margin(0.75));
  }
}

TEST_CASE("singleton learner list always wins") {
  Dataset data = log_data(100, 8);
  auto fit = fit_best_learner(parse_formula("Y ~ X"), data, 5,
                              {make_spec("only", LearnerKind::ols, {})}, 1);
  CHECK(fit.winner_name == "only");
  CHECK(fit.cv_table.size() == 1);
}

TEST_CASE("ties break by list order") {
  Dataset data = log_data(100, 9);
  auto fit = fit_best_learner(parse_formula("Y ~ X"), data, 5,
                              {make_spec("first", LearnerKind::ols, {}),
                               make_spec("second", LearnerKind::ols, {})},
                              1);
  CHECK(fit.cv_table[0].mean_rmse == fit.cv_table[1].mean_rmse);
  CHECK(fit.winner_name == "first");
}

TEST_CASE("winner minimizes the cv table and reruns identically") {
  Dataset data = log_data(400, 10);
  LearnerParams knn_p;
  knn_p.k = 15;
  LearnerParams rf_p;
  rf_p.trees = 40;
  rf_p.min_node = 5;
  std::vector<LearnerSpec> learners = {
      make_spec("lm", LearnerKind::ols, {}),
      make_spec("knn", LearnerKind::knn, knn_p),
      make_spec("rf", LearnerKind::random_forest, rf_p),
  };
  auto fit = fit_best_learner(parse_formula("Y ~ X"), data, 5, learners, 2024);
  double best = fit.cv_table[0].mean_rmse;
  std::string best_name = fit.cv_table[0].learner_name;
  for (const auto& e : fit.cv_table) {
    if (e.mean_rmse < best) {
      best = e.mean_rmse;
      best_name = e.learner_name;
    }
  }
  CHECK(fit.winner_name == best_name);

  auto fit2 = fit_best_learner(parse_formula("Y ~ X"), data, 5, learners, 2024);
  REQUIRE(fit2.cv_table.size() == fit.cv_table.size());
  for (std::size_t i = 0; i < fit.cv_table.size(); ++i) {
    CHECK(fit2.cv_table[i].mean_rmse == fit.cv_table[i].mean_rmse);
  }
}

TEST_CASE("flexible learner beats a raw-x linear model on log data") {
  Dataset data = log_data(1000, 11);
  LearnerParams knn_p;
  knn_p.k = 25;
  auto fit = fit_best_learner(parse_formula("Y ~ X"), data, 5,
                              {make_spec("lm", LearnerKind::ols, {}),
                               make_spec("knn", LearnerKind::knn, knn_p)},
                              3);
  CHECK(fit.winner_name == "knn");
}

TEST_CASE("failing candidates score infinity and warn") {
  Dataset d;
  d.add_column("Y", {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0});
  d.add_column("X1", {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0});
  d.add_column("X2", {2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0});
  LearnerParams ridge_p;
  ridge_p.lambda = 1.0;
  auto fit = fit_best_learner(parse_formula("Y ~ X1 + X2"), d, 2,
                              {make_spec("lm", LearnerKind::ols, {}),
                               make_spec("ridge", LearnerKind::ridge, ridge_p)},
                              1);
  CHECK(std::isinf(fit.cv_table[0].mean_rmse));
  CHECK(fit.winner_name == "ridge");
  bool warned = false;
  for (const auto& w : fit.warnings) warned = warned || w.code == "CANDIDATE_FAILED";
  CHECK(warned);
}

TEST_CASE("constant responses predict that constant for every learner kind") {
  Dataset d;
  d.add_column("Y", std::vector<double>(30, 4.2));
  std::vector<double> x;
  for (int i = 0; i < 30; ++i) x.push_back(i * 0.4);
  d.add_column("X", x);
  FormulaAst f = parse_formula("Y ~ X");
  LearnerParams knn_p;
  knn_p.k = 5;
  LearnerParams rf_p;
  rf_p.trees = 30;
  LearnerParams ridge_p;
  ridge_p.lambda = 2.0;
  for (auto spec : {make_spec("lm", LearnerKind::ols, {}),
                    make_spec("ridge", LearnerKind::ridge, ridge_p),
                    make_spec("knn", LearnerKind::knn, knn_p),
                    make_spec("rf", LearnerKind::random_forest, rf_p)}) {
    auto model = fit_learner(spec, spec.hyper_grid[0], f, d, 77);
    Eigen::VectorXd pred = model->predict(x_only({1.0, 7.0}));
    CHECK(pred[0] == Catch::Approx(4.2).margin(1e-9));
    CHECK(pred[1] == Catch::Approx(4.2).margin(1e-9));
  }
}

TEST_CASE("training RMSE does not exceed CV RMSE on average") {
  double train_sum = 0.0, cv_sum = 0.0;
  const int reps = 15;
  for (int rep = 0; rep < reps; ++rep) {
    Dataset data = log_data(200, 500 + static_cast<std::uint64_t>(rep));
    LearnerParams p;
    p.k = 10;
    auto sl = fit_best_learner(parse_formula("Y ~ X"), data, 5,
                               {make_spec("knn", LearnerKind::knn, p)}, 9);
    cv_sum += sl.cv_table[0].mean_rmse;
    train_sum += rmse(predict(sl, data), data.col("Y"));
  }
  CHECK(train_sum / reps <= cv_sum / reps);
}

TEST_CASE("prediction on missing covariates errors") {
  Dataset data = linear_data(30, 12);
  auto sl = fit_best_learner(parse_formula("Y ~ X"), data, 3,
                             {make_spec("lm", LearnerKind::ols, {})}, 1);
  Dataset bad;
  bad.add_column("Z", {1.0, 2.0});
  CHECK_THROWS_AS(predict(sl, bad), Error);
}

TEST_CASE("hyper grid validation") {
  LearnerSpec empty;
  empty.name = "none";
  empty.kind = LearnerKind::ols;
  CHECK_THROWS_AS(validate_learner_spec(empty), Error);

  LearnerSpec bad = make_spec("knn", LearnerKind::knn, {});
  bad.hyper_grid[0].k = 0;
  CHECK_THROWS_AS(validate_learner_spec(bad), Error);
}
