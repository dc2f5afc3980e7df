#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"
#include "margeff/estimand.hpp"
#include "margeff/normal.hpp"
#include "margeff/parallel.hpp"
#include "margeff/rng.hpp"

namespace margeff {

// Treatment-arm nuisance override: copy the control estimate, use a fixed
// numeric value, or scale the control estimate.
struct ControlTransform {
  enum class Mode { copy, value, scale };
  Mode mode = Mode::copy;
  double x = 1.0;

  static ControlTransform copy() { return {}; }
  static ControlTransform value(double v) { return {Mode::value, v}; }
  static ControlTransform scale(double s) { return {Mode::scale, s}; }

  double resolve(double control_estimate) const {
    switch (mode) {
      case Mode::copy: return control_estimate;
      case Mode::value: return x;
      case Mode::scale: return x * control_estimate;
    }
    return control_estimate;
  }
};

struct PowerInputs {
  std::vector<double> response;     // historical control outcomes, proxies Y(0)
  std::vector<double> predictions;  // mu*(0, .) proxies from the planned model
  double target_effect = 0.0;
  double exposure_prob = 0.5;
  ControlTransform var1;            // sigma1^2 relative to sigma0^2
  ControlTransform kappa1_squared;  // kappa1^2 relative to kappa0^2
  std::optional<double> margin;     // default: estimand null margin
  double alpha = 0.05;
  EstimandSpec estimand;
  std::optional<int> samplesize;    // default: length of response
  double tolerance = 1e-6;          // psi1 inversion residual check
};

struct PowerResult {
  double power = 0.0;
  int samplesize = 0;
  double target_effect = 0.0, exposure_prob = 0.5, margin = 0.0, alpha = 0.05;
  double sigma0_sq = 0.0, sigma1_sq = 0.0;
  double kappa0_sq = 0.0, kappa1_sq = 0.0;
  double variance_bound = 0.0;
  double psi0 = 0.0, psi1 = 0.0;
  double d0 = 0.0, d1 = 0.0;
  std::string estimand_name;
  WarningLog warnings;
};

// Control-arm nuisance estimates: sigma0^2 as the sample variance of the
// response (divisor n-1), kappa0^2 as the mean squared prediction error,
// psi0 as the response mean.
inline std::tuple<double, double, double> estimate_nuisances(
    const std::vector<double>& response, const std::vector<double>& predictions) {
  if (response.empty() || predictions.empty()) {
    throw Error(ErrorCode::empty_input, "estimate_nuisances: empty input");
  }
  if (response.size() != predictions.size() || response.size() < 2) {
    throw Error(ErrorCode::dimension_mismatch,
                "response and predictions must have equal length >= 2");
  }
  const double n = static_cast<double>(response.size());
  double mean = 0.0;
  for (double y : response) mean += y;
  mean /= n;
  double ss = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    double c = response[i] - mean;
    ss += c * c;
    double e = response[i] - predictions[i];
    mse += e * e;
  }
  return {ss / (n - 1.0), mse / n, mean};
}

// v_up^2 = d0^2 s0^2 + d1^2 s1^2 + pi0 pi1 (|d0| k0/pi0 + |d1| k1/pi1)^2
// with k_a = sqrt(kappa_a^2).
inline double variance_bound(double d0, double d1, double sigma0_sq, double sigma1_sq,
                             double kappa0_sq, double kappa1_sq, double pi1) {
  if (!(pi1 > 0.0 && pi1 < 1.0)) {
    throw Error(ErrorCode::bad_argument, "exposure_prob must be in (0, 1)");
  }
  if (sigma0_sq < 0.0 || sigma1_sq < 0.0 || kappa0_sq < 0.0 || kappa1_sq < 0.0) {
    throw Error(ErrorCode::bad_argument, "variances and MSEs must be >= 0");
  }
  const double pi0 = 1.0 - pi1;
  const double mix = std::abs(d0) * std::sqrt(kappa0_sq) / pi0 +
                     std::abs(d1) * std::sqrt(kappa1_sq) / pi1;
  return d0 * d0 * sigma0_sq + d1 * d1 * sigma1_sq + pi0 * pi1 * mix * mix;
}

// Misspecification-robust power approximation: the estimate is compared
// against two normal sampling distributions sharing the variance bound,
// F0 = N(margin, v/n) and F1 = N(target, v/n), rejecting above the upper
// two-sided critical value of F0.
inline PowerResult power_marginaleffect(const PowerInputs& inputs) {
  if (!(inputs.alpha > 0.0 && inputs.alpha < 1.0)) {
    throw Error(ErrorCode::bad_argument, "alpha must be in (0, 1)");
  }
  if (!(inputs.exposure_prob > 0.0 && inputs.exposure_prob < 1.0)) {
    throw Error(ErrorCode::bad_argument, "exposure_prob must be in (0, 1)");
  }

  PowerResult out;
  out.target_effect = inputs.target_effect;
  out.exposure_prob = inputs.exposure_prob;
  out.alpha = inputs.alpha;
  out.estimand_name = inputs.estimand.name;

  auto [s0, k0, psi0] = estimate_nuisances(inputs.response, inputs.predictions);
  out.sigma0_sq = s0;
  out.kappa0_sq = k0;
  out.psi0 = psi0;

  out.psi1 = solve_psi1(inputs.estimand, inputs.target_effect, psi0, inputs.tolerance);
  auto [d0, d1] = estimand_derivatives(inputs.estimand, out.psi1, out.psi0);
  out.d0 = d0;
  out.d1 = d1;
  check_sign_condition(inputs.estimand, out.psi1, out.psi0, out.warnings);

  out.sigma1_sq = inputs.var1.resolve(s0);
  out.kappa1_sq = inputs.kappa1_squared.resolve(k0);

  if (inputs.margin) {
    out.margin = *inputs.margin;
  } else if (inputs.estimand.has_margin()) {
    out.margin = inputs.estimand.null_margin;
  } else {
    throw Error(ErrorCode::bad_argument,
                "margin required: estimand '" + inputs.estimand.name +
                    "' has no default null value");
  }

  out.variance_bound = variance_bound(d0, d1, out.sigma0_sq, out.sigma1_sq,
                                      out.kappa0_sq, out.kappa1_sq, inputs.exposure_prob);
  out.samplesize = inputs.samplesize.value_or(static_cast<int>(inputs.response.size()));
  if (out.samplesize < 1) {
    throw Error(ErrorCode::bad_argument, "samplesize must be >= 1");
  }

  const double se = std::sqrt(out.variance_bound / static_cast<double>(out.samplesize));
  const double z = normal_quantile(1.0 - inputs.alpha / 2.0);
  out.power = normal_cdf((inputs.target_effect - out.margin) / se - z);
  return out;
}

// Smallest integer n whose approximated power reaches desired_power, by
// doubling then integer bisection on the monotone power-in-n curve.
inline int samplesize_for_power(const PowerInputs& inputs, double desired_power) {
  if (!(desired_power > inputs.alpha / 2.0 && desired_power < 1.0)) {
    throw Error(ErrorCode::bad_argument, "desired power must be in (alpha/2, 1)");
  }
  PowerInputs probe = inputs;
  probe.samplesize = 1;
  PowerResult base = power_marginaleffect(probe);
  if (!(inputs.target_effect > base.margin)) {
    throw Error(ErrorCode::power_not_monotone,
                "power does not increase with n: target effect " +
                    std::to_string(inputs.target_effect) + " is not beyond margin " +
                    std::to_string(base.margin));
  }

  auto power_at = [&](long long n) {
    probe.samplesize = static_cast<int>(n);
    return power_marginaleffect(probe).power;
  };

  long long hi = 1;
  while (power_at(hi) < desired_power) {
    hi *= 2;
    if (hi > (1LL << 40)) {
      throw Error(ErrorCode::power_not_monotone,
                  "no finite sample size reaches the desired power");
    }
  }
  long long lo = hi / 2;
  while (lo + 1 < hi) {
    long long mid = lo + (hi - lo) / 2;
    if (power_at(mid) >= desired_power) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return static_cast<int>(hi);
}

using ModelPredictor = std::function<Eigen::VectorXd(const Dataset&)>;
using TestDataGenerator = std::function<Dataset(int n, std::uint64_t seed)>;

struct PowerCurvePoint {
  std::string model;
  int n = 0;
  double mean_power = 0.0;
  double mc_se = 0.0;  // Monte-Carlo standard error of the mean
};

struct PowerCurveResult {
  std::vector<PowerCurvePoint> points;  // model-major, n ascending
  std::map<std::string, std::optional<int>> smallest_n_reaching;
  double desired_power = 0.9;
};

struct PowerCurveArgs {
  double target_effect = 0.0;
  double exposure_prob = 0.5;
  ControlTransform var1;
  ControlTransform kappa1_squared;
  std::optional<double> margin;
  double alpha = 0.05;
  EstimandSpec estimand;
  double tolerance = 1e-6;
  std::string response_column = "Y";
  std::uint64_t seed = 1;
  int threads = 1;
};

// Sweeps sample sizes: per (n, iteration) a fresh test dataset is
// generated, every model predicts on it, nuisances are re-estimated and
// the power approximation is evaluated at samplesize = n. Powers are
// averaged over iterations per (model, n).
inline PowerCurveResult repeat_power_curve(
    const std::vector<std::pair<std::string, ModelPredictor>>& models,
    const TestDataGenerator& generate, const std::vector<int>& ns, int n_iter,
    double desired_power, const PowerCurveArgs& args) {
  if (models.empty()) {
    throw Error(ErrorCode::bad_argument, "model list must be non-empty");
  }
  if (ns.empty() || !std::is_sorted(ns.begin(), ns.end())) {
    throw Error(ErrorCode::bad_argument, "ns must be non-empty and ascending");
  }
  if (n_iter < 1) {
    throw Error(ErrorCode::bad_argument, "n_iter must be >= 1");
  }

  const std::size_t n_models = models.size();
  const std::size_t n_sizes = ns.size();
  std::vector<double> powers(n_models * n_sizes * static_cast<std::size_t>(n_iter), 0.0);

  parallel_for(n_sizes * static_cast<std::size_t>(n_iter), args.threads,
               [&](std::size_t task) {
                 const std::size_t size_idx = task / static_cast<std::size_t>(n_iter);
                 const std::size_t iter = task % static_cast<std::size_t>(n_iter);
                 const int n = ns[size_idx];
                 Dataset data = generate(
                     n, derive_stream(args.seed, {0x63757276ULL, size_idx, iter}));
                 const auto& y = data.col(args.response_column);
                 for (std::size_t m = 0; m < n_models; ++m) {
                   Eigen::VectorXd pred = models[m].second(data);
                   PowerInputs in;
                   in.response = y;
                   in.predictions.assign(pred.data(), pred.data() + pred.size());
                   in.target_effect = args.target_effect;
                   in.exposure_prob = args.exposure_prob;
                   in.var1 = args.var1;
                   in.kappa1_squared = args.kappa1_squared;
                   in.margin = args.margin;
                   in.alpha = args.alpha;
                   in.estimand = args.estimand;
                   in.tolerance = args.tolerance;
                   in.samplesize = n;
                   powers[(m * n_sizes + size_idx) * static_cast<std::size_t>(n_iter) +
                          iter] = power_marginaleffect(in).power;
                 }
               });

  PowerCurveResult out;
  out.desired_power = desired_power;
  for (std::size_t m = 0; m < n_models; ++m) {
    std::optional<int> first_n;
    for (std::size_t s = 0; s < n_sizes; ++s) {
      const double* block =
          &powers[(m * n_sizes + s) * static_cast<std::size_t>(n_iter)];
      double mean = 0.0;
      for (int i = 0; i < n_iter; ++i) mean += block[i];
      mean /= n_iter;
      double var = 0.0;
      for (int i = 0; i < n_iter; ++i) {
        double c = block[i] - mean;
        var += c * c;
      }
      double mc_se = n_iter > 1
                         ? std::sqrt(var / (n_iter - 1.0) / static_cast<double>(n_iter))
                         : 0.0;
      out.points.push_back({models[m].first, ns[s], mean, mc_se});
      if (!first_n && mean >= desired_power) first_n = ns[s];
    }
    out.smallest_n_reaching[models[m].first] = first_n;
  }
  return out;
}

}  // namespace margeff
