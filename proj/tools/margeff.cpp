// margeff command-line tool: simulate GLM datasets, estimate marginal
// effects (optionally with prognostic-score adjustment) and approximate
// prospective power.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "margeff/config.hpp"
#include "margeff/csv.hpp"
#include "margeff/errors.hpp"
#include "margeff/estimand.hpp"
#include "margeff/glm.hpp"
#include "margeff/learners.hpp"
#include "margeff/plugin.hpp"
#include "margeff/power.hpp"
#include "margeff/prognostic.hpp"
#include "margeff/simulate.hpp"
#include "margeff/svg.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;

int g_verbosity = 1;

void print_warnings(const margeff::WarningLog& warnings) {
  if (g_verbosity < 1) return;
  for (const auto& w : warnings) {
    std::cerr << "warning: [" << w.code << "] " << w.message << "\n";
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (text.empty() || text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw margeff::Error(margeff::ErrorCode::io_error, "cannot write " + path);
  out << text;
  if (text.empty() || text.back() != '\n') out << "\n";
}

margeff::EstimandSpec resolve_estimand(const std::string& name, const std::string& expr) {
  if (!expr.empty()) return margeff::expression_estimand(expr);
  return margeff::builtin_estimand(name.empty() ? "ate" : name);
}

// "file.csv:col" -> one numeric column
std::vector<double> read_column_spec(const std::string& spec) {
  auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon + 1 >= spec.size()) {
    throw margeff::Error(margeff::ErrorCode::bad_argument,
                         "expected 'file.csv:column', got '" + spec + "'");
  }
  margeff::Dataset data = margeff::read_csv(spec.substr(0, colon));
  return data.col(spec.substr(colon + 1));
}

std::vector<int> parse_ns_range(const std::string& text) {
  int a = 0, b = 0, step = 0;
  if (std::sscanf(text.c_str(), "%d:%d:%d", &a, &b, &step) != 3 || step <= 0 || a > b) {
    throw margeff::Error(margeff::ErrorCode::bad_argument,
                         "--ns expects 'start:stop:step' with step > 0, got '" + text + "'");
  }
  std::vector<int> ns;
  for (int n = a; n <= b; n += step) ns.push_back(n);
  return ns;
}

json hypers_to_json(margeff::LearnerKind kind, const margeff::LearnerParams& p) {
  json out = json::object();
  switch (kind) {
    case margeff::LearnerKind::ridge: out["lambda"] = p.lambda; break;
    case margeff::LearnerKind::knn: out["k"] = p.k; break;
    case margeff::LearnerKind::random_forest:
      out["min_node"] = p.min_node;
      out["trees"] = p.trees;
      break;
    case margeff::LearnerKind::ols: break;
  }
  return out;
}

struct EstimateFlags {
  std::string data_path, formula_text, exposure, family_name = "gaussian";
  std::string estimand_name = "ate", estimand_expr;
  double exposure_prob = 0.0;
  bool cv_variance = false;
  int cv_folds = 10;
  double ci_level = 0.95;
  std::uint64_t seed = 1;
  std::string out_path;
  double nb_theta = 0.0;  // 0 = estimate
};

void add_estimate_flags(CLI::App* cmd, EstimateFlags& f) {
  cmd->add_option("--data", f.data_path, "Trial data CSV")->required();
  cmd->add_option("--formula", f.formula_text, "Model formula, e.g. 'Y ~ A * X'")->required();
  cmd->add_option("--exposure-indicator", f.exposure, "Name of the 0/1 arm column")
      ->required();
  cmd->add_option("--exposure-prob", f.exposure_prob,
                  "Randomization probability P(A=1)")
      ->required();
  cmd->add_option("--family", f.family_name, "gaussian|binomial|poisson|gamma|inverse_gaussian|negative_binomial");
  cmd->add_option("--estimand", f.estimand_name, "ate|rate_ratio|odds_ratio");
  cmd->add_option("--estimand-expr", f.estimand_expr,
                  "Custom estimand expression in psi1, psi0");
  cmd->add_flag("--cv-variance", f.cv_variance, "Cross-fit the influence-function variance");
  cmd->add_option("--cv-folds", f.cv_folds, "Folds for --cv-variance");
  cmd->add_option("--ci-level", f.ci_level, "Wald CI level");
  cmd->add_option("--seed", f.seed, "Seed for fold assignment");
  cmd->add_option("--nb-theta", f.nb_theta, "Fixed NB shape (default: estimated)");
  cmd->add_option("--out", f.out_path, "Output JSON path (default stdout)");
}

margeff::MarginalEffectEstimate run_estimate_core(const EstimateFlags& f,
                                                  margeff::TrialData& trial_out,
                                                  margeff::FormulaAst& formula_out,
                                                  margeff::Family& family_out) {
  margeff::Dataset data = margeff::read_csv(f.data_path);
  formula_out = margeff::parse_formula(f.formula_text);
  trial_out = margeff::make_trial_data(std::move(data), formula_out.response, f.exposure,
                                       f.exposure_prob);
  family_out.kind = margeff::parse_family_name(f.family_name);
  if (f.nb_theta > 0.0) family_out.nb_theta = f.nb_theta;

  margeff::EstimateOptions opts;
  opts.cv_variance = f.cv_variance;
  opts.cv_variance_folds = f.cv_folds;
  opts.ci_level = f.ci_level;
  opts.seed = f.seed;
  return margeff::estimate_marginal_effect(
      formula_out, trial_out, family_out, resolve_estimand(f.estimand_name, f.estimand_expr),
      opts);
}

json estimate_to_json(const margeff::MarginalEffectEstimate& est,
                      const margeff::Family& family) {
  json out;
  out["psi0"] = est.psi0_hat;
  out["psi1"] = est.psi1_hat;
  out["estimate"] = est.estimate;
  out["std_error"] = est.std_error;
  out["ci_low"] = est.ci_low;
  out["ci_high"] = est.ci_high;
  out["estimand_name"] = est.estimand.name;
  out["family"] = margeff::family_name(family.kind);
  out["n"] = est.n;
  out["cv_used"] = est.cv_used;
  return out;
}

int cmd_simulate(const std::string& expr, const std::string& coefs,
                 const std::vector<std::string>& vars, const std::string& family_name,
                 std::size_t n, std::uint64_t seed, double gaussian_sd, double dispersion,
                 double nb_theta, const std::string& response, const std::string& out_path) {
  margeff::SimSpec spec;
  spec.predictor = expr;
  if (!coefs.empty()) spec.coefficients = margeff::parse_coef_list(coefs);
  for (const auto& v : vars) spec.variables.push_back(margeff::parse_var_spec(v));
  spec.family.kind = margeff::parse_family_name(family_name);
  if (dispersion > 0.0) spec.family.dispersion = dispersion;
  spec.n = n;
  spec.seed = seed;
  spec.gaussian_sd = gaussian_sd;
  spec.nb_theta = nb_theta;
  spec.response_name = response;

  margeff::Dataset data = margeff::glm_data(spec);
  if (out_path.empty() || out_path == "-") {
    margeff::write_csv(data, std::cout);
  } else {
    margeff::write_csv(data, out_path);
  }
  return 0;
}

int cmd_estimate(const EstimateFlags& f) {
  margeff::TrialData trial;
  margeff::FormulaAst formula;
  margeff::Family family;
  auto est = run_estimate_core(f, trial, formula, family);
  print_warnings(est.warnings);
  if (g_verbosity >= 2) {
    std::cerr << "glm: " << est.glm.iterations << " IRLS iterations, deviance "
              << est.glm.deviance << "\n";
  }
  write_text(f.out_path, estimate_to_json(est, family).dump(2));
  return 0;
}

int cmd_estimate_prog(const EstimateFlags& f, const std::string& hist_path,
                      const std::string& prog_formula_text, int cv_prog_folds,
                      const std::string& learners_path) {
  margeff::Dataset data = margeff::read_csv(f.data_path);
  margeff::FormulaAst formula = margeff::parse_formula(f.formula_text);
  margeff::TrialData trial = margeff::make_trial_data(std::move(data), formula.response,
                                                      f.exposure, f.exposure_prob);
  margeff::Family family;
  family.kind = margeff::parse_family_name(f.family_name);
  if (f.nb_theta > 0.0) family.nb_theta = f.nb_theta;

  margeff::Dataset hist = margeff::read_csv(hist_path);

  margeff::PrognosticOptions opts;
  opts.cv_prog_folds = cv_prog_folds;
  if (!learners_path.empty()) opts.learners = margeff::read_learners_file(learners_path);
  opts.estimate.cv_variance = f.cv_variance;
  opts.estimate.cv_variance_folds = f.cv_folds;
  opts.estimate.ci_level = f.ci_level;
  opts.estimate.seed = f.seed;

  std::optional<margeff::FormulaAst> prog_formula;
  if (!prog_formula_text.empty()) prog_formula = margeff::parse_formula(prog_formula_text);

  auto adjusted = margeff::estimate_with_prognostic_score(
      formula, trial, family, resolve_estimand(f.estimand_name, f.estimand_expr), hist,
      prog_formula ? &*prog_formula : nullptr, opts);
  print_warnings(adjusted.base.warnings);
  print_warnings(adjusted.prognostic.super_learner.warnings);

  json out = estimate_to_json(adjusted.base, family);
  out["winner_name"] = adjusted.prognostic.super_learner.winner_name;
  out["winner_hypers"] = hypers_to_json(adjusted.prognostic.super_learner.winner_kind,
                                        adjusted.prognostic.super_learner.winner_hypers);
  json table = json::array();
  for (const auto& e : adjusted.prognostic.super_learner.cv_table) {
    json row;
    row["learner"] = e.learner_name;
    row["setting"] = e.setting_index;
    row["params"] = hypers_to_json(e.kind, e.params);
    row["mean_rmse"] = e.mean_rmse;
    table.push_back(row);
  }
  out["cv_rmse_table"] = table;
  out["historical_n"] = adjusted.prognostic.historical_n;
  out["clamped_count"] = adjusted.clamped_count;
  write_text(f.out_path, out.dump(2));
  return 0;
}

struct PowerFlags {
  std::string response_spec, predictions_spec;
  double target_effect = 0.0, exposure_prob = 0.0;
  std::string var1_text, kappa1_text;
  std::optional<double> margin;
  double alpha = 0.05;
  std::string estimand_name = "ate", estimand_expr;
  std::optional<int> samplesize;
  std::optional<double> desired_power;
  double tolerance = 1e-6;
  std::string out_path;
};

int cmd_power(const PowerFlags& f) {
  margeff::PowerInputs in;
  in.response = read_column_spec(f.response_spec);
  in.predictions = read_column_spec(f.predictions_spec);
  in.target_effect = f.target_effect;
  in.exposure_prob = f.exposure_prob;
  if (!f.var1_text.empty()) in.var1 = margeff::parse_control_transform(f.var1_text);
  if (!f.kappa1_text.empty()) {
    in.kappa1_squared = margeff::parse_control_transform(f.kappa1_text);
  }
  in.margin = f.margin;
  in.alpha = f.alpha;
  in.estimand = resolve_estimand(f.estimand_name, f.estimand_expr);
  in.samplesize = f.samplesize;
  in.tolerance = f.tolerance;

  json out;
  margeff::PowerResult res;
  if (f.desired_power) {
    int n = margeff::samplesize_for_power(in, *f.desired_power);
    in.samplesize = n;
    res = margeff::power_marginaleffect(in);
    out["desired_power"] = *f.desired_power;
  } else {
    res = margeff::power_marginaleffect(in);
  }
  print_warnings(res.warnings);

  out["power"] = res.power;
  out["samplesize"] = res.samplesize;
  out["target_effect"] = res.target_effect;
  out["exposure_prob"] = res.exposure_prob;
  out["margin"] = res.margin;
  out["alpha"] = res.alpha;
  out["sigma0_sq"] = res.sigma0_sq;
  out["sigma1_sq"] = res.sigma1_sq;
  out["kappa0_sq"] = res.kappa0_sq;
  out["kappa1_sq"] = res.kappa1_sq;
  out["variance_bound"] = res.variance_bound;
  out["psi0"] = res.psi0;
  out["psi1"] = res.psi1;
  out["d0"] = res.d0;
  out["d1"] = res.d1;
  out["estimand_name"] = res.estimand_name;
  write_text(f.out_path, out.dump(2));
  return 0;
}

int cmd_power_curve(const std::string& models_path, const std::string& ns_text, int n_iter,
                    double desired_power, const PowerFlags& f, std::uint64_t seed,
                    int threads, const std::string& out_csv, const std::string& out_svg) {
  margeff::PowerCurveConfig cfg = margeff::read_power_curve_config(models_path);

  margeff::Dataset train =
      cfg.train_csv ? margeff::read_csv(*cfg.train_csv) : margeff::glm_data(*cfg.train_sim);

  std::vector<std::pair<std::string, margeff::ModelPredictor>> models;
  for (std::size_t m = 0; m < cfg.models.size(); ++m) {
    const auto& mc = cfg.models[m];
    margeff::FormulaAst formula = margeff::parse_formula(mc.formula);
    if (mc.type == margeff::ModelConfig::Type::glm) {
      margeff::Family family;
      family.kind = mc.family;
      margeff::DesignMatrix design = margeff::build_design(formula, train);
      auto fit = std::make_shared<margeff::GlmFit>(
          margeff::irls_fit(design, train.col(formula.response), family));
      models.emplace_back(mc.name, [fit, formula](const margeff::Dataset& data) {
        return margeff::predict_mean(*fit, margeff::build_design(formula, data).matrix);
      });
    } else {
      auto learners = mc.learners.empty() ? margeff::default_learners() : mc.learners;
      auto sl = std::make_shared<margeff::SuperLearnerFit>(margeff::fit_best_learner(
          formula, train, mc.cv_folds, learners,
          margeff::derive_stream(seed, {0x6d6f646cULL, m})));
      print_warnings(sl->warnings);
      models.emplace_back(mc.name, [sl](const margeff::Dataset& data) {
        return margeff::predict(*sl, data);
      });
    }
  }

  margeff::PowerCurveArgs args;
  args.target_effect = f.target_effect;
  args.exposure_prob = f.exposure_prob;
  if (!f.var1_text.empty()) args.var1 = margeff::parse_control_transform(f.var1_text);
  if (!f.kappa1_text.empty()) {
    args.kappa1_squared = margeff::parse_control_transform(f.kappa1_text);
  }
  args.margin = f.margin;
  args.alpha = f.alpha;
  args.estimand = resolve_estimand(f.estimand_name, f.estimand_expr);
  args.tolerance = f.tolerance;
  args.response_column = cfg.test_template.response_name;
  args.seed = seed;
  args.threads = threads;

  auto generator = [&cfg](int n, std::uint64_t task_seed) {
    margeff::SimSpec spec = cfg.test_template;
    spec.n = static_cast<std::size_t>(n);
    spec.seed = task_seed;
    return margeff::glm_data(spec);
  };

  margeff::PowerCurveResult result = margeff::repeat_power_curve(
      models, generator, parse_ns_range(ns_text), n_iter, desired_power, args);

  std::ostringstream csv;
  csv << "model,n,mean_power,mc_se\n";
  for (const auto& p : result.points) {
    csv << p.model << "," << p.n << "," << margeff::format_double(p.mean_power) << ","
        << margeff::format_double(p.mc_se) << "\n";
  }
  write_text(out_csv, csv.str());
  if (!out_svg.empty()) margeff::write_power_curves_svg(result, out_svg);

  json summary;
  for (const auto& [model, n] : result.smallest_n_reaching) {
    summary["smallest_n_reaching_desired_power"][model] =
        n ? json(*n) : json(nullptr);
  }
  summary["desired_power"] = desired_power;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marginal effect estimation and power approximation for randomized trials"};
  app.set_version_flag("--version", std::string("margeff ") + kVersion);
  app.require_subcommand(1);
  app.add_option("--verbose", g_verbosity, "Verbosity: 0 silent, 1 warnings, 2 chatty");

  // simulate
  std::string sim_expr, sim_coefs, sim_family = "gaussian", sim_response = "Y", sim_out;
  std::vector<std::string> sim_vars;
  std::size_t sim_n = 0;
  std::uint64_t sim_seed = 1;
  double sim_gaussian_sd = 1.0, sim_dispersion = 0.0, sim_nb_theta = 1.0;
  CLI::App* simulate = app.add_subcommand("simulate", "Simulate a dataset from a GLM");
  simulate->add_option("--expr", sim_expr, "Linear predictor, e.g. 'b0+b1*log(X)+b2*A'")
      ->required();
  simulate->add_option("--coef", sim_coefs, "Coefficients, e.g. 'b0=1,b1=3,b2=2'");
  simulate->add_option("--var", sim_vars, "Variable generator, e.g. 'X=uniform(1,50)'");
  simulate->add_option("--family", sim_family, "Response family");
  simulate->add_option("--n", sim_n, "Rows to simulate")->required();
  simulate->add_option("--seed", sim_seed, "RNG seed");
  simulate->add_option("--gaussian-sd", sim_gaussian_sd, "Gaussian noise SD");
  simulate->add_option("--dispersion", sim_dispersion, "Gamma / inverse-Gaussian dispersion");
  simulate->add_option("--nb-theta", sim_nb_theta, "Negative binomial shape");
  simulate->add_option("--response", sim_response, "Response column name");
  simulate->add_option("--out", sim_out, "Output CSV path (default stdout)");

  // estimate
  EstimateFlags est;
  CLI::App* estimate = app.add_subcommand("estimate", "Plug-in marginal effect from trial data");
  add_estimate_flags(estimate, est);

  // estimate-prog
  EstimateFlags estp;
  std::string hist_path, prog_formula_text, learners_path;
  int cv_prog_folds = 5;
  CLI::App* estimate_prog = app.add_subcommand(
      "estimate-prog", "Plug-in marginal effect with prognostic-score adjustment");
  add_estimate_flags(estimate_prog, estp);
  estimate_prog->add_option("--data-hist", hist_path, "Historical control data CSV")
      ->required();
  estimate_prog->add_option("--prog-formula", prog_formula_text,
                            "Prognostic model formula (default: main effects of all "
                            "historical columns)");
  estimate_prog->add_option("--cv-prog-folds", cv_prog_folds,
                            "CV folds for the super learner");
  estimate_prog->add_option("--learners", learners_path, "Learner config JSON");

  // power
  PowerFlags pw;
  double pw_margin = 0.0, pw_desired = 0.0;
  int pw_samplesize = 0;
  CLI::App* power = app.add_subcommand("power", "Misspecification-robust power approximation");
  power->add_option("--response-csv", pw.response_spec, "Historical response as file.csv:col")
      ->required();
  power->add_option("--predictions-csv", pw.predictions_spec,
                    "Model predictions as file.csv:col")
      ->required();
  power->add_option("--target-effect", pw.target_effect, "Effect size to detect")->required();
  power->add_option("--exposure-prob", pw.exposure_prob, "P(A=1)")->required();
  power->add_option("--var1", pw.var1_text, "sigma1^2: number or scale:<factor>");
  power->add_option("--kappa1-sq", pw.kappa1_text, "kappa1^2: number or scale:<factor>");
  CLI::Option* margin_opt = power->add_option("--margin", pw_margin, "Null margin");
  power->add_option("--alpha", pw.alpha, "Significance level");
  power->add_option("--estimand", pw.estimand_name, "ate|rate_ratio|odds_ratio");
  power->add_option("--estimand-expr", pw.estimand_expr, "Custom estimand expression");
  CLI::Option* ss_opt = power->add_option("--samplesize", pw_samplesize, "Total sample size");
  CLI::Option* dp_opt =
      power->add_option("--desired-power", pw_desired, "Search the smallest n reaching this");
  ss_opt->excludes(dp_opt);
  dp_opt->excludes(ss_opt);
  power->add_option("--tolerance", pw.tolerance, "psi1 inversion tolerance");
  power->add_option("--out", pw.out_path, "Output JSON path (default stdout)");

  // power-curve
  PowerFlags pc;
  double pc_margin = 0.0;
  std::string pc_models, pc_ns, pc_out_csv, pc_out_svg;
  int pc_n_iter = 20, pc_threads = 1;
  double pc_desired = 0.9;
  std::uint64_t pc_seed = 1;
  CLI::App* power_curve =
      app.add_subcommand("power-curve", "Average power across sample sizes and models");
  power_curve->add_option("--models", pc_models, "Model/config JSON")->required();
  power_curve->add_option("--ns", pc_ns, "Sample sizes start:stop:step")->required();
  power_curve->add_option("--n-iter", pc_n_iter, "Iterations to average per point");
  power_curve->add_option("--desired-power", pc_desired, "Horizontal rule / summary target");
  power_curve->add_option("--target-effect", pc.target_effect, "Effect size to detect")
      ->required();
  power_curve->add_option("--exposure-prob", pc.exposure_prob, "P(A=1)")->required();
  power_curve->add_option("--var1", pc.var1_text, "sigma1^2: number or scale:<factor>");
  power_curve->add_option("--kappa1-sq", pc.kappa1_text, "kappa1^2: number or scale:<factor>");
  CLI::Option* pc_margin_opt = power_curve->add_option("--margin", pc_margin, "Null margin");
  power_curve->add_option("--alpha", pc.alpha, "Significance level");
  power_curve->add_option("--estimand", pc.estimand_name, "ate|rate_ratio|odds_ratio");
  power_curve->add_option("--estimand-expr", pc.estimand_expr, "Custom estimand expression");
  power_curve->add_option("--tolerance", pc.tolerance, "psi1 inversion tolerance");
  power_curve->add_option("--seed", pc_seed, "Root seed for the sweep");
  power_curve->add_option("--threads", pc_threads, "Worker thread cap")
      ->envname("MARGEFF_THREADS");
  power_curve->add_option("--out-csv", pc_out_csv, "Curve CSV output path")->required();
  power_curve->add_option("--out-svg", pc_out_svg, "Curve SVG output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) {
      return cmd_simulate(sim_expr, sim_coefs, sim_vars, sim_family, sim_n, sim_seed,
                          sim_gaussian_sd, sim_dispersion, sim_nb_theta, sim_response,
                          sim_out);
    }
    if (estimate->parsed()) return cmd_estimate(est);
    if (estimate_prog->parsed()) {
      return cmd_estimate_prog(estp, hist_path, prog_formula_text, cv_prog_folds,
                               learners_path);
    }
    if (power->parsed()) {
      if (*margin_opt) pw.margin = pw_margin;
      if (*ss_opt) pw.samplesize = pw_samplesize;
      if (*dp_opt) pw.desired_power = pw_desired;
      return cmd_power(pw);
    }
    if (power_curve->parsed()) {
      if (*pc_margin_opt) pc.margin = pc_margin;
      return cmd_power_curve(pc_models, pc_ns, pc_n_iter, pc_desired, pc, pc_seed,
                             pc_threads, pc_out_csv, pc_out_svg);
    }
  } catch (const margeff::Error& e) {
    json err;
    err["error"] = e.code_name();
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err;
    err["error"] = "INTERNAL";
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
