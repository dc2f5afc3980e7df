#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "margeff/errors.hpp"
#include "margeff/learners.hpp"
#include "margeff/power.hpp"
#include "margeff/simulate.hpp"

namespace margeff {

// "X=uniform(1,50)" / "A=bernoulli(0.5)" / "Z=normal(0,1)" / "C=constant(3)"
inline std::pair<std::string, VarGen> parse_var_spec(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::syntax_error, "variable spec needs 'name=gen(args)': " + text);
  }
  std::string name = text.substr(0, eq);
  std::string rhs = text.substr(eq + 1);
  auto open = rhs.find('(');
  if (open == std::string::npos || rhs.empty() || rhs.back() != ')') {
    throw Error(ErrorCode::syntax_error, "bad generator spec: " + rhs);
  }
  std::string fn = rhs.substr(0, open);
  std::string args = rhs.substr(open + 1, rhs.size() - open - 2);

  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= args.size() && !args.empty()) {
    auto comma = args.find(',', pos);
    std::string tok = args.substr(pos, comma == std::string::npos ? std::string::npos
                                                                  : comma - pos);
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error(ErrorCode::syntax_error, "bad generator argument '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }

  auto need = [&](std::size_t k) {
    if (vals.size() != k) {
      throw Error(ErrorCode::syntax_error,
                  fn + " takes " + std::to_string(k) + " arguments");
    }
  };
  if (fn == "uniform") {
    need(2);
    return {name, VarGen::uniform(vals[0], vals[1])};
  }
  if (fn == "bernoulli") {
    need(1);
    return {name, VarGen::bernoulli(vals[0])};
  }
  if (fn == "normal") {
    need(2);
    return {name, VarGen::normal(vals[0], vals[1])};
  }
  if (fn == "constant") {
    need(1);
    return {name, VarGen::constant(vals[0])};
  }
  throw Error(ErrorCode::unknown_function, "unknown generator: " + fn);
}

// "b0=1,b1=3,b2=2"
inline std::map<std::string, double> parse_coef_list(const std::string& text) {
  std::map<std::string, double> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    auto comma = text.find(',', pos);
    std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                  : comma - pos);
    auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::syntax_error, "coefficient spec needs 'name=value': " + tok);
    }
    try {
      out[tok.substr(0, eq)] = std::stod(tok.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::syntax_error, "bad coefficient value in '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// "1.5" (fixed value) or "scale:1.2" (multiple of the control estimate).
inline ControlTransform parse_control_transform(const std::string& text) {
  if (text.rfind("scale:", 0) == 0) {
    try {
      return ControlTransform::scale(std::stod(text.substr(6)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::syntax_error, "bad scale factor in '" + text + "'");
    }
  }
  try {
    return ControlTransform::value(std::stod(text));
  } catch (const std::exception&) {
    throw Error(ErrorCode::syntax_error,
                "expected a number or 'scale:<factor>', got '" + text + "'");
  }
}

inline std::vector<LearnerSpec> learners_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_array() ? j : j.at("learners");
  std::vector<LearnerSpec> out;
  for (const auto& lj : list) {
    LearnerSpec spec;
    spec.name = lj.at("name").get<std::string>();
    spec.kind = parse_learner_kind(lj.at("kind").get<std::string>());
    int default_trees = lj.value("trees", 500);
    if (lj.contains("hyper_grid")) {
      for (const auto& gj : lj.at("hyper_grid")) {
        LearnerParams p;
        p.lambda = gj.value("lambda", p.lambda);
        p.k = gj.value("k", p.k);
        p.min_node = gj.value("min_node", p.min_node);
        p.trees = gj.value("trees", default_trees);
        spec.hyper_grid.push_back(p);
      }
    } else {
      LearnerParams p;
      p.trees = default_trees;
      spec.hyper_grid.push_back(p);
    }
    validate_learner_spec(spec);
    out.push_back(std::move(spec));
  }
  if (out.empty()) {
    throw Error(ErrorCode::bad_argument, "learner config lists no learners");
  }
  return out;
}

inline std::vector<LearnerSpec> read_learners_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::syntax_error, std::string("bad JSON in ") + path + ": " + e.what());
  }
  return learners_from_json(j);
}

inline SimSpec sim_spec_from_json(const nlohmann::json& j) {
  SimSpec spec;
  spec.predictor = j.at("expr").get<std::string>();
  if (j.contains("coefficients")) {
    for (auto it = j.at("coefficients").begin(); it != j.at("coefficients").end(); ++it) {
      spec.coefficients[it.key()] = it.value().get<double>();
    }
  }
  if (j.contains("variables")) {
    for (const auto& vj : j.at("variables")) {
      spec.variables.push_back(parse_var_spec(vj.get<std::string>()));
    }
  }
  spec.family.kind = parse_family_name(j.value("family", "gaussian"));
  if (j.contains("dispersion")) spec.family.dispersion = j.at("dispersion").get<double>();
  spec.gaussian_sd = j.value("gaussian_sd", 1.0);
  spec.nb_theta = j.value("nb_theta", 1.0);
  spec.response_name = j.value("response", "Y");
  spec.n = j.value("n", 0);
  spec.seed = j.value("seed", 0);
  return spec;
}

// Power-curve sweep configuration: a training data source, a test-data
// simulation template (n and seed are filled per sweep task) and the named
// models whose predictions drive the power approximation.
struct ModelConfig {
  enum class Type { glm, super_learner };
  std::string name;
  Type type = Type::glm;
  std::string formula;
  FamilyKind family = FamilyKind::gaussian;     // glm models
  int cv_folds = 5;                             // super learner models
  std::vector<LearnerSpec> learners;            // empty means defaults
};

struct PowerCurveConfig {
  std::optional<std::string> train_csv;
  std::optional<SimSpec> train_sim;
  SimSpec test_template;
  std::vector<ModelConfig> models;
};

inline PowerCurveConfig read_power_curve_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::syntax_error, std::string("bad JSON in ") + path + ": " + e.what());
  }

  PowerCurveConfig cfg;
  const auto& train = j.at("train");
  if (train.contains("csv")) {
    cfg.train_csv = train.at("csv").get<std::string>();
  } else if (train.contains("simulate")) {
    cfg.train_sim = sim_spec_from_json(train.at("simulate"));
  } else {
    throw Error(ErrorCode::bad_argument, "train must specify 'csv' or 'simulate'");
  }
  cfg.test_template = sim_spec_from_json(j.at("test_data"));

  for (const auto& mj : j.at("models")) {
    ModelConfig m;
    m.name = mj.at("name").get<std::string>();
    std::string type = mj.at("type").get<std::string>();
    if (type == "glm") {
      m.type = ModelConfig::Type::glm;
      m.family = parse_family_name(mj.value("family", "gaussian"));
    } else if (type == "super_learner") {
      m.type = ModelConfig::Type::super_learner;
      m.cv_folds = mj.value("cv_folds", 5);
      if (mj.contains("learners")) m.learners = learners_from_json(mj.at("learners"));
    } else {
      throw Error(ErrorCode::bad_argument, "unknown model type: " + type);
    }
    m.formula = mj.at("formula").get<std::string>();
    cfg.models.push_back(std::move(m));
  }
  if (cfg.models.empty()) {
    throw Error(ErrorCode::bad_argument, "power-curve config lists no models");
  }
  return cfg;
}

}  // namespace margeff
