#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "margeff/errors.hpp"

namespace margeff {

enum class FamilyKind {
  gaussian,
  binomial,
  poisson,
  gamma,
  inverse_gaussian,
  negative_binomial,
};

enum class LinkKind { identity, logit, log, inverse, inverse_squared };

inline const char* family_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::binomial: return "binomial";
    case FamilyKind::poisson: return "poisson";
    case FamilyKind::gamma: return "gamma";
    case FamilyKind::inverse_gaussian: return "inverse_gaussian";
    case FamilyKind::negative_binomial: return "negative_binomial";
  }
  return "?";
}

inline const char* link_name(LinkKind k) {
  switch (k) {
    case LinkKind::identity: return "identity";
    case LinkKind::logit: return "logit";
    case LinkKind::log: return "log";
    case LinkKind::inverse: return "inverse";
    case LinkKind::inverse_squared: return "inverse_squared";
  }
  return "?";
}

inline FamilyKind parse_family_name(const std::string& s) {
  if (s == "gaussian" || s == "normal") return FamilyKind::gaussian;
  if (s == "binomial") return FamilyKind::binomial;
  if (s == "poisson") return FamilyKind::poisson;
  if (s == "gamma") return FamilyKind::gamma;
  if (s == "inverse_gaussian" || s == "inverse.gaussian") return FamilyKind::inverse_gaussian;
  if (s == "negative_binomial" || s == "negbin" || s == "nb") return FamilyKind::negative_binomial;
  throw Error(ErrorCode::bad_argument, "unknown family: " + s);
}

// Canonical link per family; negative binomial uses the log link.
inline LinkKind canonical_link(FamilyKind k) {
  switch (k) {
    case FamilyKind::gaussian: return LinkKind::identity;
    case FamilyKind::binomial: return LinkKind::logit;
    case FamilyKind::poisson: return LinkKind::log;
    case FamilyKind::gamma: return LinkKind::inverse;
    case FamilyKind::inverse_gaussian: return LinkKind::inverse_squared;
    case FamilyKind::negative_binomial: return LinkKind::log;
  }
  return LinkKind::identity;
}

struct Link {
  LinkKind kind;

  double g(double mu) const {
    switch (kind) {
      case LinkKind::identity: return mu;
      case LinkKind::logit: return std::log(mu / (1.0 - mu));
      case LinkKind::log: return std::log(mu);
      case LinkKind::inverse: return 1.0 / mu;
      case LinkKind::inverse_squared: return 1.0 / (mu * mu);
    }
    return mu;
  }

  double g_inv(double eta) const {
    switch (kind) {
      case LinkKind::identity: return eta;
      case LinkKind::logit: return 1.0 / (1.0 + std::exp(-eta));
      case LinkKind::log: return std::exp(eta);
      case LinkKind::inverse: return 1.0 / eta;
      case LinkKind::inverse_squared: return 1.0 / std::sqrt(eta);
    }
    return eta;
  }

  // d mu / d eta evaluated at mu.
  double mu_eta(double mu) const {
    switch (kind) {
      case LinkKind::identity: return 1.0;
      case LinkKind::logit: return mu * (1.0 - mu);
      case LinkKind::log: return mu;
      case LinkKind::inverse: return -mu * mu;
      case LinkKind::inverse_squared: return -mu * mu * mu / 2.0;
    }
    return 1.0;
  }
};

// Error distribution plus optional fixed dispersion / NB shape. A nullopt
// means "estimate from the data".
struct Family {
  FamilyKind kind = FamilyKind::gaussian;
  std::optional<double> dispersion;  // gaussian / gamma / inverse gaussian
  std::optional<double> nb_theta;    // negative binomial only

  Link link() const { return Link{canonical_link(kind)}; }

  double variance(double mu, double theta) const {
    switch (kind) {
      case FamilyKind::gaussian: return 1.0;
      case FamilyKind::binomial: return mu * (1.0 - mu);
      case FamilyKind::poisson: return mu;
      case FamilyKind::gamma: return mu * mu;
      case FamilyKind::inverse_gaussian: return mu * mu * mu;
      case FamilyKind::negative_binomial: return mu + mu * mu / theta;
    }
    return 1.0;
  }

  void check_response(double y) const {
    bool ok = std::isfinite(y);
    switch (kind) {
      case FamilyKind::gaussian: break;
      case FamilyKind::binomial: ok = ok && y >= 0.0 && y <= 1.0; break;
      case FamilyKind::poisson:
      case FamilyKind::negative_binomial: ok = ok && y >= 0.0; break;
      case FamilyKind::gamma:
      case FamilyKind::inverse_gaussian: ok = ok && y > 0.0; break;
    }
    if (!ok) {
      throw Error(ErrorCode::response_support,
                  "response value " + std::to_string(y) + " outside support of " +
                      family_name(kind));
    }
  }

  void check_mean(double mu) const {
    bool ok = std::isfinite(mu);
    switch (kind) {
      case FamilyKind::gaussian: break;
      case FamilyKind::binomial: ok = ok && mu > 0.0 && mu < 1.0; break;
      case FamilyKind::poisson:
      case FamilyKind::negative_binomial:
      case FamilyKind::gamma:
      case FamilyKind::inverse_gaussian: ok = ok && mu > 0.0; break;
    }
    if (!ok) {
      throw Error(ErrorCode::mean_support,
                  "mean value " + std::to_string(mu) + " outside mean space of " +
                      family_name(kind));
    }
  }

  double unit_deviance(double y, double mu, double theta) const {
    auto xlogxy = [](double x, double m) { return x > 0.0 ? x * std::log(x / m) : 0.0; };
    switch (kind) {
      case FamilyKind::gaussian: {
        double r = y - mu;
        return r * r;
      }
      case FamilyKind::binomial:
        return 2.0 * (xlogxy(y, mu) + xlogxy(1.0 - y, 1.0 - mu));
      case FamilyKind::poisson:
        return 2.0 * (xlogxy(y, mu) - (y - mu));
      case FamilyKind::gamma:
        return 2.0 * (-std::log(y / mu) + (y - mu) / mu);
      case FamilyKind::inverse_gaussian: {
        double r = y - mu;
        return r * r / (y * mu * mu);
      }
      case FamilyKind::negative_binomial:
        return 2.0 * (xlogxy(y, mu) - (y + theta) * std::log((y + theta) / (mu + theta)));
    }
    return 0.0;
  }

  double init_mean(double y) const {
    switch (kind) {
      case FamilyKind::gaussian: return y;
      case FamilyKind::binomial: return (y + 0.5) / 2.0;
      case FamilyKind::poisson:
      case FamilyKind::negative_binomial: return y + 0.1;
      case FamilyKind::gamma:
      case FamilyKind::inverse_gaussian: return y;
    }
    return y;
  }
};

}  // namespace margeff
