#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "margeff/plugin.hpp"
#include "margeff/simulate.hpp"

using namespace margeff;

namespace {

TrialData toy_trial() {
  // Fixed 4-row toy dataset used by the termwise influence-function oracle.
  Dataset d;
  d.add_column("Y", {1.0, 2.0, 3.0, 5.0});
  d.add_column("A", {0.0, 0.0, 1.0, 1.0});
  return make_trial_data(d, "Y", "A", 0.5);
}

Dataset paper_style_gaussian(std::size_t n, std::uint64_t seed) {
  SimSpec spec;
  spec.predictor = "b0+b1*log(X)+b2*A";
  spec.coefficients = {{"b0", 1.0}, {"b1", 3.0}, {"b2", 2.0}};
  spec.variables.push_back({"X", VarGen::uniform(1.0, 50.0)});
  spec.variables.push_back({"A", VarGen::bernoulli(0.5)});
  spec.n = n;
  spec.seed = seed;
  return glm_data(spec);
}

}  // namespace

TEST_CASE("trial data validation") {
  Dataset d;
  d.add_column("Y", {1.0, 2.0});
  d.add_column("A", {0.0, 2.0});
  try {
    make_trial_data(d, "Y", "A", 0.5);
    FAIL("expected exposure error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::exposure_not_binary);
  }

  d.replace_column("A", {1.0, 1.0});
  try {
    make_trial_data(d, "Y", "A", 0.5);
    FAIL("expected single-arm error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::single_arm);
  }

  d.replace_column("A", {0.0, 1.0});
  CHECK_THROWS_AS(make_trial_data(d, "Y", "A", 1.5), Error);
  CHECK_NOTHROW(make_trial_data(d, "Y", "A", 0.5));
}

TEST_CASE("collapsibility: plug-in ATE equals the A coefficient") {
  Dataset data = paper_style_gaussian(300, 8);
  TrialData trial = make_trial_data(data, "Y", "A", 0.5);
  FormulaAst formula = parse_formula("Y ~ A + X");
  GlmFit fit = irls_fit(build_design(formula, trial.data), trial.data.col("Y"), Family{});
  auto [psi0, psi1] = counterfactual_means(fit, formula, trial);
  CHECK(psi1 - psi0 == Catch::Approx(fit.coefficients[1]).margin(1e-8));
}

TEST_CASE("termwise oracle on the fixed 4-row dataset") {
  TrialData trial = toy_trial();
  FormulaAst formula = parse_formula("Y ~ A");
  GlmFit fit = irls_fit(build_design(formula, trial.data), trial.data.col("Y"), Family{});
  auto [psi0, psi1] = counterfactual_means(fit, formula, trial);
  InfluenceComponents comp = influence_components(fit, formula, trial, psi0, psi1);
  auto [v_inf_sq, if_values] = if_variance(comp, builtin_estimand("ate"), psi0, psi1);

  // Oracle: enumerate the influence formula term by term from raw data,
  // with the arm means computed directly rather than through IRLS.
  const double y[4] = {1, 2, 3, 5};
  const double a[4] = {0, 0, 1, 1};
  const double mu0 = (1.0 + 2.0) / 2.0, mu1 = (3.0 + 5.0) / 2.0;
  double oracle_acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    double phi0 = (a[i] == 0.0 ? 1.0 / 0.5 : 0.0) * (y[i] - mu0) + (mu0 - mu0);
    double phi1 = (a[i] == 1.0 ? 1.0 / 0.5 : 0.0) * (y[i] - mu1) + (mu1 - mu1);
    double term = -1.0 * phi0 + 1.0 * phi1;
    oracle_acc += term * term;
    CHECK(if_values[i] == Catch::Approx(term).margin(1e-12));
  }
  double oracle_v = oracle_acc / 4.0;
  CHECK(oracle_v == 2.5);  // frozen hand computation
  CHECK(v_inf_sq == Catch::Approx(2.5).margin(1e-12));
  CHECK(psi0 == Catch::Approx(1.5).margin(1e-10));
  CHECK(psi1 == Catch::Approx(4.0).margin(1e-10));
}

TEST_CASE("subjects contribute no inverse-weighted residual to the other arm") {
  TrialData trial = toy_trial();
  FormulaAst formula = parse_formula("Y ~ A");
  GlmFit fit = irls_fit(build_design(formula, trial.data), trial.data.col("Y"), Family{});
  auto [psi0, psi1] = counterfactual_means(fit, formula, trial);
  InfluenceComponents comp = influence_components(fit, formula, trial, psi0, psi1);
  // treated rows: phi0 reduces to mu0 - psi0 = 0 in this saturated model
  CHECK(comp.phi0[2] == Catch::Approx(0.0).margin(1e-10));
  CHECK(comp.phi0[3] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("saturated fit leaves only the centered prediction contrast") {
  // Y exactly 1 + 2A + 3X + 0.5 A X: residuals vanish and the influence
  // values reduce to the centered counterfactual contrast.
  Dataset d;
  std::vector<double> a = {0, 1, 0, 1, 0, 1};
  std::vector<double> x = {1, 2, 3, 4, 5, 6};
  std::vector<double> y;
  for (int i = 0; i < 6; ++i) y.push_back(1 + 2 * a[i] + 3 * x[i] + 0.5 * a[i] * x[i]);
  d.add_column("Y", y);
  d.add_column("A", a);
  d.add_column("X", x);
  TrialData trial = make_trial_data(d, "Y", "A", 0.5);
  FormulaAst formula = parse_formula("Y ~ A * X");
  auto est = estimate_marginal_effect(formula, trial, Family{}, builtin_estimand("ate"));

  double xbar = 3.5;
  double expected_v = 0.0;
  for (int i = 0; i < 6; ++i) {
    double contrast = 0.5 * (x[i] - xbar);  // (mu1 - mu0) minus its mean
    expected_v += contrast * contrast;
  }
  expected_v /= 6.0;
  CHECK(est.std_error == Catch::Approx(std::sqrt(expected_v / 6.0)).margin(1e-9));
}

TEST_CASE("if_variance composes derivatives with the influence components") {
  TrialData trial = toy_trial();
  FormulaAst formula = parse_formula("Y ~ A");
  GlmFit fit = irls_fit(build_design(formula, trial.data), trial.data.col("Y"), Family{});
  auto [psi0, psi1] = counterfactual_means(fit, formula, trial);
  InfluenceComponents comp = influence_components(fit, formula, trial, psi0, psi1);

  auto [v_ate, if_ate] = if_variance(comp, builtin_estimand("ate"), psi0, psi1);
  for (int i = 0; i < 4; ++i) {
    CHECK(if_ate[i] == Catch::Approx(comp.phi1[i] - comp.phi0[i]).margin(1e-12));
  }

  EstimandSpec rr = builtin_estimand("rate_ratio");
  auto [v_rr, if_rr] = if_variance(comp, rr, 1.0, psi1);  // psi0 = 1
  for (int i = 0; i < 4; ++i) {
    CHECK(if_rr[i] == Catch::Approx(-psi1 * comp.phi0[i] + comp.phi1[i]).margin(1e-12));
  }
}

TEST_CASE("influence values have mean zero when pi matches the arm fractions") {
  SimSpec spec;
  spec.predictor = "b0+b1*X+b2*A";
  spec.coefficients = {{"b0", 1.0}, {"b1", 0.5}, {"b2", 1.0}};
  spec.variables.push_back({"X", VarGen::normal(0.0, 1.0)});
  spec.variables.push_back({"A", VarGen::column({})});
  std::vector<double> arms(400);
  for (std::size_t i = 0; i < arms.size(); ++i) arms[i] = i % 2 ? 1.0 : 0.0;
  spec.variables[1].second = VarGen::column(arms);
  spec.n = 400;
  spec.seed = 12;
  Dataset data = glm_data(spec);
  TrialData trial = make_trial_data(data, "Y", "A", 0.5);
  auto est = estimate_marginal_effect(parse_formula("Y ~ A + X"), trial, Family{},
                                      builtin_estimand("ate"));
  double mean = est.if_values.mean();
  double sd = std::sqrt(est.if_values.squaredNorm() / est.if_values.size());
  CHECK(std::abs(mean) < 1e-6 * sd);
}

TEST_CASE("estimates are invariant to row order") {
  Dataset data = paper_style_gaussian(200, 77);
  TrialData trial = make_trial_data(data, "Y", "A", 0.5);
  FormulaAst formula = parse_formula("Y ~ A * X");
  auto est = estimate_marginal_effect(formula, trial, Family{}, builtin_estimand("ate"));

  std::vector<std::size_t> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[3], perm[120]);
  TrialData shuffled = make_trial_data(data.subset(perm), "Y", "A", 0.5);
  auto est2 = estimate_marginal_effect(formula, shuffled, Family{}, builtin_estimand("ate"));
  CHECK(est2.estimate == Catch::Approx(est.estimate).margin(1e-10));
  CHECK(est2.psi0_hat == Catch::Approx(est.psi0_hat).margin(1e-10));
  CHECK(est2.psi1_hat == Catch::Approx(est.psi1_hat).margin(1e-10));
}

TEST_CASE("exposure must appear in the model formula") {
  TrialData trial = toy_trial();
  try {
    estimate_marginal_effect(parse_formula("Y ~ 1"), trial, Family{},
                             builtin_estimand("ate"));
    FAIL("expected exposure error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::exposure_not_in_formula);
  }
}

TEST_CASE("pi mismatch warning fires beyond the 0.1 threshold") {
  Dataset data = paper_style_gaussian(200, 5);
  TrialData trial = make_trial_data(data, "Y", "A", 0.9);
  auto est = estimate_marginal_effect(parse_formula("Y ~ A + X"), trial, Family{},
                                      builtin_estimand("ate"));
  bool warned = false;
  for (const auto& w : est.warnings) warned = warned || w.code == "PI_MISMATCH";
  CHECK(warned);
}

TEST_CASE("cross-fitted variance stays close to the in-sample variance") {
  Dataset data = paper_style_gaussian(1000, 42);
  TrialData trial = make_trial_data(data, "Y", "A", 0.5);
  FormulaAst formula = parse_formula("Y ~ A * X");
  auto plain = estimate_marginal_effect(formula, trial, Family{}, builtin_estimand("ate"));

  EstimateOptions opts;
  opts.cv_variance = true;
  opts.cv_variance_folds = 5;
  opts.seed = 9;
  auto cv = estimate_marginal_effect(formula, trial, Family{}, builtin_estimand("ate"), opts);

  CHECK(cv.cv_used);
  CHECK(cv.estimate == Catch::Approx(plain.estimate).margin(1e-12));  // point unchanged
  CHECK(cv.std_error / plain.std_error == Catch::Approx(1.0).margin(0.08));
  CHECK(cv.std_error != plain.std_error);

  auto cv_again = estimate_marginal_effect(formula, trial, Family{},
                                           builtin_estimand("ate"), opts);
  CHECK(cv_again.std_error == cv.std_error);  // fold assignment is seed-pure
}

TEST_CASE("degenerate folds are rejected") {
  TrialData trial = toy_trial();
  FormulaAst formula = parse_formula("Y ~ A");
  // more folds than rows leaves empty validation sets
  CHECK_THROWS_AS(
      cv_if_variance(formula, trial, Family{}, builtin_estimand("ate"), 8, 1),
      Error);

  // a lone treated subject must not vanish from any training fold
  Dataset d;
  d.add_column("Y", {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  d.add_column("A", {0.0, 0.0, 0.0, 0.0, 0.0, 1.0});
  TrialData lone = make_trial_data(d, "Y", "A", 0.5);
  try {
    cv_if_variance(parse_formula("Y ~ A"), lone, Family{}, builtin_estimand("ate"), 2, 1);
    FAIL("expected fold imbalance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::fold_arm_imbalance);
  }
}

TEST_CASE("adding an irrelevant covariate barely moves the estimate") {
  SimSpec spec;
  spec.predictor = "b0+b1*log(X)+b2*A";
  spec.coefficients = {{"b0", 1.0}, {"b1", 3.0}, {"b2", 2.0}};
  spec.variables.push_back({"X", VarGen::uniform(1.0, 50.0)});
  spec.variables.push_back({"A", VarGen::bernoulli(0.5)});
  spec.variables.push_back({"Z", VarGen::normal(0.0, 1.0)});  // pure noise
  int hits = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    spec.n = 2000;
    spec.seed = 1000 + static_cast<std::uint64_t>(rep);
    Dataset data = glm_data(spec);
    TrialData trial = make_trial_data(data, "Y", "A", 0.5);
    auto small = estimate_marginal_effect(parse_formula("Y ~ A + X"), trial, Family{},
                                          builtin_estimand("ate"));
    auto big = estimate_marginal_effect(parse_formula("Y ~ A + X + Z"), trial, Family{},
                                        builtin_estimand("ate"));
    if (std::abs(big.estimate - small.estimate) < 3.0 * big.std_error) ++hits;
  }
  CHECK(hits >= reps - 2);
}
