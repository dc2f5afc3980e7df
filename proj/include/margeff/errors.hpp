#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace margeff {

// Machine-readable error codes, surfaced verbatim in CLI JSON error output.
enum class ErrorCode {
  syntax_error,
  unknown_function,
  missing_column,
  duplicate_column,
  empty_input,
  ragged_row,
  non_numeric,
  nonfinite_value,
  dimension_mismatch,
  rank_deficient,
  non_convergence,
  response_support,
  mean_support,
  theta_unidentifiable,
  unknown_estimand,
  bracket_fail,
  tolerance_fail,
  nonfinite_derivative,
  single_arm,
  exposure_not_binary,
  exposure_not_in_formula,
  fold_arm_imbalance,
  fold_too_small,
  singular_design,
  bad_hyperparameter,
  score_clamp_excess,
  response_not_in_hist,
  power_not_monotone,
  bad_argument,
  io_error,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::syntax_error: return "SYNTAX_ERROR";
    case ErrorCode::unknown_function: return "UNKNOWN_FUNCTION";
    case ErrorCode::missing_column: return "MISSING_COLUMN";
    case ErrorCode::duplicate_column: return "DUPLICATE_COLUMN";
    case ErrorCode::empty_input: return "EMPTY_INPUT";
    case ErrorCode::ragged_row: return "RAGGED_ROW";
    case ErrorCode::non_numeric: return "NON_NUMERIC";
    case ErrorCode::nonfinite_value: return "NONFINITE_VALUE";
    case ErrorCode::dimension_mismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::rank_deficient: return "RANK_DEFICIENT";
    case ErrorCode::non_convergence: return "NON_CONVERGENCE";
    case ErrorCode::response_support: return "RESPONSE_SUPPORT";
    case ErrorCode::mean_support: return "MEAN_SUPPORT";
    case ErrorCode::theta_unidentifiable: return "THETA_UNIDENTIFIABLE";
    case ErrorCode::unknown_estimand: return "UNKNOWN_ESTIMAND";
    case ErrorCode::bracket_fail: return "BRACKET_FAIL";
    case ErrorCode::tolerance_fail: return "TOLERANCE_FAIL";
    case ErrorCode::nonfinite_derivative: return "NONFINITE_DERIVATIVE";
    case ErrorCode::single_arm: return "SINGLE_ARM";
    case ErrorCode::exposure_not_binary: return "EXPOSURE_NOT_BINARY";
    case ErrorCode::exposure_not_in_formula: return "EXPOSURE_NOT_IN_FORMULA";
    case ErrorCode::fold_arm_imbalance: return "FOLD_ARM_IMBALANCE";
    case ErrorCode::fold_too_small: return "FOLD_TOO_SMALL";
    case ErrorCode::singular_design: return "SINGULAR_DESIGN";
    case ErrorCode::bad_hyperparameter: return "BAD_HYPERPARAMETER";
    case ErrorCode::score_clamp_excess: return "SCORE_CLAMP_EXCESS";
    case ErrorCode::response_not_in_hist: return "RESPONSE_NOT_IN_HIST";
    case ErrorCode::power_not_monotone: return "POWER_NOT_MONOTONE";
    case ErrorCode::bad_argument: return "BAD_ARGUMENT";
    case ErrorCode::io_error: return "IO_ERROR";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  const char* code_name() const { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

// Non-fatal diagnostics accumulated by estimation routines and carried on
// their result objects.
struct Warning {
  std::string code;
  std::string message;
};

using WarningLog = std::vector<Warning>;

inline void warn(WarningLog& log, std::string code, std::string message) {
  log.push_back(Warning{std::move(code), std::move(message)});
}

}  // namespace margeff
