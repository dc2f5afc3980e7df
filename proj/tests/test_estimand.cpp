#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "margeff/estimand.hpp"
#include "margeff/rng.hpp"

using namespace margeff;

TEST_CASE("builtin point values match the published runs") {
  EstimandSpec ate = builtin_estimand("ate");
  CHECK(ate.r(11.97, 9.993) == Catch::Approx(1.977).margin(1e-12));

  EstimandSpec rr = builtin_estimand("rate_ratio");
  CHECK(rr.r(702052.0, 94856.0) == Catch::Approx(7.401).margin(5e-4));

  EstimandSpec orr = builtin_estimand("odds_ratio");
  CHECK(orr.r(0.37, 0.37) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("builtin margins") {
  CHECK(builtin_estimand("ate").null_margin == 0.0);
  CHECK(builtin_estimand("rate_ratio").null_margin == 1.0);
  CHECK(builtin_estimand("odds_ratio").null_margin == 1.0);
  CHECK_THROWS_AS(builtin_estimand("hazard_ratio"), Error);
}

TEST_CASE("closed-form derivatives at reference points") {
  auto [d0a, d1a] = estimand_derivatives(builtin_estimand("ate"), 3.7, -1.2);
  CHECK(d0a == -1.0);
  CHECK(d1a == 1.0);

  auto [d0r, d1r] = estimand_derivatives(builtin_estimand("rate_ratio"), 2.0, 1.0);
  CHECK(d0r == Catch::Approx(-2.0));
  CHECK(d1r == Catch::Approx(1.0));
}

TEST_CASE("numeric derivatives of a custom expression match calculus") {
  EstimandSpec s = expression_estimand("psi1/sqrt(psi0)*2-1");
  double psi1 = 702052.0, psi0 = 94857.0;
  auto [d0, d1] = numeric_derivatives(s, psi1, psi0);
  double d0_true = -psi1 / (psi0 * std::sqrt(psi0));
  double d1_true = 2.0 / std::sqrt(psi0);
  CHECK(d0 == Catch::Approx(d0_true).epsilon(1e-6));
  CHECK(d1 == Catch::Approx(d1_true).epsilon(1e-6));
}

TEST_CASE("numeric derivatives agree with closed forms across a grid") {
  for (const char* name : {"ate", "rate_ratio", "odds_ratio"}) {
    EstimandSpec spec = builtin_estimand(name);
    EstimandSpec numeric = spec;
    numeric.d0 = nullptr;
    numeric.d1 = nullptr;
    bool unit_domain = std::string(name) == "odds_ratio";
    int checked = 0;
    for (int i = 1; i <= 10; ++i) {
      for (int j = 1; j <= 10; ++j) {
        double psi1 = unit_domain ? i / 11.0 : 0.4 * i;
        double psi0 = unit_domain ? j / 11.0 : 0.3 * j;
        auto [c0, c1] = estimand_derivatives(spec, psi1, psi0);
        auto [n0, n1] = numeric_derivatives(numeric, psi1, psi0);
        CHECK(n0 == Catch::Approx(c0).epsilon(1e-6));
        CHECK(n1 == Catch::Approx(c1).epsilon(1e-6));
        ++checked;
      }
    }
    CHECK(checked == 100);
  }
}

TEST_CASE("solve_psi1 with closed-form inverses") {
  CHECK(solve_psi1(builtin_estimand("ate"), 1.3, 10.0) == Catch::Approx(11.3));
  CHECK(solve_psi1(builtin_estimand("ate"), 0.0, 5.0) == Catch::Approx(5.0));
  double psi1 = solve_psi1(builtin_estimand("rate_ratio"), 7.401, 94856.0);
  CHECK(psi1 / 94856.0 == Catch::Approx(7.401).epsilon(1e-6));
  CHECK(psi1 == Catch::Approx(702029.256).epsilon(1e-6));
}

TEST_CASE("solve_psi1 numeric bracketing matches the inverse route") {
  Rng rng(2024);
  for (const char* name : {"ate", "rate_ratio", "odds_ratio"}) {
    EstimandSpec spec = builtin_estimand(name);
    EstimandSpec no_inverse = spec;
    no_inverse.inverse_in_psi1 = nullptr;
    for (int rep = 0; rep < 40; ++rep) {
      double psi0, target;
      if (std::string(name) == "odds_ratio") {
        psi0 = rng.uniform(0.1, 0.9);
        target = rng.uniform(0.2, 5.0);
      } else if (std::string(name) == "rate_ratio") {
        psi0 = rng.uniform(0.5, 20.0);
        target = rng.uniform(0.2, 8.0);
      } else {
        psi0 = rng.uniform(-10.0, 10.0);
        target = rng.uniform(-5.0, 5.0);
      }
      double direct = solve_psi1(spec, target, psi0, 1e-9);
      double numeric = solve_psi1(no_inverse, target, psi0, 1e-9);
      CHECK(spec.r(numeric, psi0) == Catch::Approx(target).margin(1e-8 * std::max(1.0, std::abs(target))));
      CHECK(numeric == Catch::Approx(direct).margin(1e-5 * std::max(1.0, std::abs(direct))));
    }
  }
}

TEST_CASE("solve_psi1 reports unattainable targets") {
  EstimandSpec orr = builtin_estimand("odds_ratio");
  orr.inverse_in_psi1 = nullptr;
  // odds ratio cannot be negative
  CHECK_THROWS_AS(solve_psi1(orr, -2.0, 0.4, 1e-9), Error);
}

TEST_CASE("expression estimands reject other symbols") {
  CHECK_THROWS_AS(expression_estimand("psi1 - psi2"), Error);
  EstimandSpec s = expression_estimand("psi1 - psi0");
  CHECK(s.r(3.0, 1.0) == 2.0);
  CHECK_FALSE(s.has_margin());
}

TEST_CASE("sign-condition violations warn instead of erroring") {
  EstimandSpec flipped = expression_estimand("psi0 - psi1");  // d0 = 1, d1 = -1
  WarningLog log;
  check_sign_condition(flipped, 1.0, 2.0, log);
  REQUIRE(log.size() == 1);
  CHECK(log[0].code == "SIGN_CONDITION");

  WarningLog clean;
  check_sign_condition(builtin_estimand("ate"), 1.0, 2.0, clean);
  CHECK(clean.empty());
}
