#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "sysrisk/systemic.hpp"

using namespace sysrisk;

namespace {

SystemicMeasureSpec uniform_spec(int m, RiskMeasureSpec outer,
                                 RiskMeasureSpec inner) {
  SystemicMeasureSpec spec;
  spec.outer = outer;
  spec.inner.assign(m, inner);
  spec.weights = ScalarizationWeights::uniform(m);
  return spec;
}

RandomVector constant_vector(const VectorXd& values, int scenarios) {
  MatrixXd v(values.size(), scenarios);
  for (int s = 0; s < scenarios; ++s) v.col(s) = values;
  return RandomVector(v, ProbabilityVector::uniform(scenarios));
}

}  // namespace

TEST_CASE("risk profile per component") {
  SUBCASE("zero vector has zero profile") {
    RandomVector X(MatrixXd::Zero(3, 4), ProbabilityVector::uniform(4));
    Rng rng(2);
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, 3);
    CHECK(risk_profile(X, spec).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("deterministic vector is a fixed point") {
    VectorXd v(5);
    v << 20.49, 9.44, 6.27, 16.46, 6.84;
    RandomVector X = constant_vector(v, 3);
    SystemicMeasureSpec spec = uniform_spec(5, RiskMeasureSpec::expectation(),
                                            RiskMeasureSpec::semideviation(0.5));
    VectorXd profile = risk_profile(X, spec);
    for (int i = 0; i < 5; ++i)
      CHECK(profile[i] == doctest::Approx(v[i]).epsilon(1e-12));
  }
  SUBCASE("two-by-two semideviation profile") {
    MatrixXd values(2, 2);
    values << 0.0, 10.0,
              4.0, 4.0;
    RandomVector X(values, ProbabilityVector::uniform(2));
    SystemicMeasureSpec spec = uniform_spec(2, RiskMeasureSpec::expectation(),
                                            RiskMeasureSpec::semideviation(0.5));
    VectorXd profile = risk_profile(X, spec);
    CHECK(profile[0] == doctest::Approx(6.25));
    CHECK(profile[1] == doctest::Approx(4.0));
  }
}

TEST_CASE("published aggregate values for the five-facility profiles") {
  // Risk profiles reported for the ten-scenario run; feeding them through
  // the two aggregations must reproduce the printed totals.
  VectorXd exp_profile(5), semi_profile(5);
  exp_profile << 20.49, 9.44, 6.27, 16.46, 6.84;
  semi_profile << 13.67, 12.35, 12.35, 12.35, 11.03;

  SystemicMeasureSpec exp_spec = uniform_spec(
      5, RiskMeasureSpec::expectation(), RiskMeasureSpec::semideviation(0.5));
  SystemicMeasureSpec semi_spec = uniform_spec(
      5, RiskMeasureSpec::semideviation(0.5), RiskMeasureSpec::semideviation(0.5));

  RandomVector X1 = constant_vector(exp_profile, 2);
  RandomVector X2 = constant_vector(semi_profile, 2);
  CHECK(rho_sys(X1, exp_spec) == doctest::Approx(11.90).epsilon(0.0005));
  CHECK(rho_sys(X2, semi_spec) == doctest::Approx(12.48).epsilon(0.0005));
}

TEST_CASE("translation of the whole system shifts the risk by the constant") {
  Rng rng(88);
  for (int t = 0; t < 100; ++t) {
    const int m = 2 + rng.uniform_int(3);
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
    RandomVector X = testing::random_vector(rng, m, 2 + rng.uniform_int(5));
    double a = rng.uniform(-4.0, 4.0);
    RandomVector shifted(X.values.array() + a, X.prob);
    CHECK(rho_sys(shifted, spec) ==
          doctest::Approx(rho_sys(X, spec) + a).epsilon(1e-9));
  }
}

TEST_CASE("systemic axioms on random instances") {
  Rng rng(909090);
  for (int t = 0; t < 200; ++t) {
    const int m = 2 + rng.uniform_int(3);
    const int n = 2 + rng.uniform_int(5);
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
    RandomVector X = testing::random_vector(rng, m, n);
    RandomVector Y(X.values + MatrixXd::NullaryExpr(m, n, [&](int, int) {
                     return rng.uniform(-10.0, 10.0);
                   }),
                   X.prob);

    // Midpoint convexity.
    RandomVector mid(0.5 * (X.values + Y.values), X.prob);
    CHECK(rho_sys(mid, spec) <=
          0.5 * rho_sys(X, spec) + 0.5 * rho_sys(Y, spec) + 1e-9);

    // Monotonicity under componentwise a.s. dominance.
    RandomVector above(X.values + MatrixXd::NullaryExpr(m, n, [&](int, int) {
                         return rng.uniform(0.0, 2.0);
                       }),
                       X.prob);
    CHECK(rho_sys(above, spec) >= rho_sys(X, spec) - 1e-9);

    // Positive homogeneity.
    double scale = rng.uniform(0.2, 3.0);
    RandomVector scaled(scale * X.values, X.prob);
    CHECK(rho_sys(scaled, spec) ==
          doctest::Approx(scale * rho_sys(X, spec)).epsilon(1e-9));
  }
}

TEST_CASE("normalization") {
  Rng rng(13);
  for (int t = 0; t < 30; ++t) {
    const int m = 2 + rng.uniform_int(4);
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
    RandomVector ones(MatrixXd::Ones(m, 3), ProbabilityVector::uniform(3));
    RandomVector zeros(MatrixXd::Zero(m, 3), ProbabilityVector::uniform(3));
    CHECK(rho_sys(ones, spec) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rho_sys(zeros, spec) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("law invariance under joint scenario permutation") {
  Rng rng(1414);
  for (int t = 0; t < 50; ++t) {
    const int m = 2 + rng.uniform_int(3);
    const int n = 3 + rng.uniform_int(4);
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
    RandomVector X = testing::random_vector(rng, m, n);
    std::vector<int> perm(n);
    for (int s = 0; s < n; ++s) perm[s] = s;
    for (int s = n - 1; s > 0; --s)
      std::swap(perm[s], perm[rng.uniform_int(s + 1)]);
    MatrixXd shuffled(m, n);
    VectorXd probs(n);
    for (int s = 0; s < n; ++s) {
      shuffled.col(s) = X.values.col(perm[s]);
      probs[s] = X.prob[perm[s]];
    }
    RandomVector Y(shuffled, ProbabilityVector(probs));
    CHECK(rho_sys(Y, spec) == doctest::Approx(rho_sys(X, spec)).epsilon(1e-12));
  }
}

TEST_CASE("expectation outer degenerates to the weighted sum") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const int m = 2 + rng.uniform_int(3);
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
    spec.outer = RiskMeasureSpec::expectation();
    RandomVector X = testing::random_vector(rng, m, 2 + rng.uniform_int(5));
    VectorXd profile = risk_profile(X, spec);
    CHECK(rho_sys(X, spec) ==
          doctest::Approx(spec.weights.c.dot(profile)).epsilon(1e-12));
  }
}

TEST_CASE("systemic subgradient") {
  SUBCASE("all-expectation gives the all-ones subgradient") {
    Rng rng(21);
    RandomVector X = testing::random_vector(rng, 3, 4);
    SystemicMeasureSpec spec = uniform_spec(3, RiskMeasureSpec::expectation(),
                                            RiskMeasureSpec::expectation());
    SystemicSubgradient g = rho_sys_subgradient(X, spec);
    CHECK((g.zeta.array() - 1.0).abs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("support identity on random instances") {
    Rng rng(2024);
    for (int t = 0; t < 300; ++t) {
      const int m = 2 + rng.uniform_int(3);
      SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
      RandomVector X = testing::random_vector(rng, m, 2 + rng.uniform_int(5));
      SystemicSubgradient g = rho_sys_subgradient(X, spec);
      double support = 0.0;
      for (int i = 0; i < m; ++i)
        support += spec.weights.c[i] *
                   X.prob.p.dot(g.zeta.row(i).transpose().cwiseProduct(
                       X.values.row(i).transpose()));
      CHECK(support == doctest::Approx(rho_sys(X, spec)).epsilon(1e-8));
      for (int i = 0; i < m; ++i)
        for (int s = 0; s < X.scenarios(); ++s)
          CHECK(g.zeta(i, s) == doctest::Approx(g.nu[i] * g.xi(i, s)));
    }
  }
  SUBCASE("subgradient inequality on random pairs") {
    Rng rng(777);
    for (int t = 0; t < 300; ++t) {
      const int m = 2 + rng.uniform_int(3);
      const int n = 2 + rng.uniform_int(5);
      SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
      RandomVector X = testing::random_vector(rng, m, n);
      RandomVector Y(X.values + MatrixXd::NullaryExpr(m, n, [&](int, int) {
                       return rng.uniform(-8.0, 8.0);
                     }),
                     X.prob);
      SystemicSubgradient g = rho_sys_subgradient(X, spec);
      double inner_product = 0.0;
      for (int i = 0; i < m; ++i)
        for (int s = 0; s < n; ++s)
          inner_product += spec.weights.c[i] * X.prob[s] * g.zeta(i, s) *
                           (Y.values(i, s) - X.values(i, s));
      CHECK(rho_sys(Y, spec) >= rho_sys(X, spec) + inner_product - 1e-8);
    }
  }
}

TEST_CASE("scalarized aggregation") {
  SUBCASE("singleton set on a constant vector") {
    VectorXd a = VectorXd::Constant(3, 2.5);
    RandomVector X = constant_vector(a, 4);
    ScalarizationSet S{{ScalarizationWeights::uniform(3)}};
    CHECK(rho_scalarized(X, S, RiskMeasureSpec::semideviation(0.5)) ==
          doctest::Approx(2.5).epsilon(1e-12));
  }
  SUBCASE("two unit vectors pick the componentwise maximum") {
    MatrixXd values(2, 2);
    values << 0.0, 10.0,
              10.0, 0.0;
    RandomVector X(values, ProbabilityVector::uniform(2));
    VectorXd e1(2), e2(2);
    e1 << 1.0, 0.0;
    e2 << 0.0, 1.0;
    ScalarizationSet S{{ScalarizationWeights(e1), ScalarizationWeights(e2)}};
    CHECK(rho_scalarized(X, S, RiskMeasureSpec::expectation()) ==
          doctest::Approx(10.0).epsilon(1e-12));
  }
  SUBCASE("all unit vectors with expectation equals E[max_i X_i]") {
    Rng rng(333);
    for (int t = 0; t < 50; ++t) {
      const int m = 2 + rng.uniform_int(3);
      const int n = 2 + rng.uniform_int(5);
      RandomVector X = testing::random_vector(rng, m, n);
      ScalarizationSet S;
      for (int i = 0; i < m; ++i) {
        VectorXd e = VectorXd::Zero(m);
        e[i] = 1.0;
        S.members.emplace_back(e);
      }
      double expected = 0.0;
      for (int s = 0; s < n; ++s)
        expected += X.prob[s] * X.values.col(s).maxCoeff();
      CHECK(rho_scalarized(X, S, RiskMeasureSpec::expectation()) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
  }
  SUBCASE("empty set is rejected") {
    Rng rng(1);
    RandomVector X = testing::random_vector(rng, 2, 2);
    CHECK_THROWS_AS(
        rho_scalarized(X, ScalarizationSet{}, RiskMeasureSpec::expectation()),
        InvalidInput);
  }
}

TEST_CASE("simplex grid enumerates compositions") {
  auto grid = simplex_grid(3, 4);
  CHECK(grid.size() == 15);  // C(4+2, 2)
  for (const VectorXd& c : grid) {
    CHECK(c.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((c.array() >= -1e-15).all());
  }
}

TEST_CASE("scalarized increasing convex order checks") {
  Rng rng(60601);
  SUBCASE("translation upward preserves the order") {
    for (int t = 0; t < 30; ++t) {
      const int m = 2 + rng.uniform_int(2);
      RandomVector X = testing::random_vector(rng, m, 4, true);
      RandomVector Y(X.values.array() + rng.uniform(0.0, 3.0), X.prob);
      CHECK(icx_dominates(X, Y, 6, 24));
    }
  }
  SUBCASE("componentwise dominance implies the order") {
    for (int t = 0; t < 30; ++t) {
      const int m = 2 + rng.uniform_int(2);
      const int n = 3 + rng.uniform_int(3);
      RandomVector X = testing::random_vector(rng, m, n, true);
      RandomVector Y(X.values + MatrixXd::NullaryExpr(m, n, [&](int, int) {
                       return rng.uniform(0.0, 2.0);
                     }),
                     X.prob);
      CHECK(icx_dominates(X, Y, 6, 24));
    }
  }
  SUBCASE("a mean-preserving spread dominates") {
    // Y doubles the deviation of X around its per-component mean; every
    // scalarization of Y is then a mean-preserving spread of that of X.
    for (int t = 0; t < 30; ++t) {
      const int m = 2;
      const int n = 4;
      RandomVector X = testing::random_vector(rng, m, n, true);
      MatrixXd spread = X.values;
      VectorXd mean = X.values.rowwise().mean();
      for (int i = 0; i < m; ++i)
        for (int s = 0; s < n; ++s)
          spread(i, s) = mean[i] + 2.0 * (X.values(i, s) - mean[i]);
      RandomVector Y(spread, X.prob);
      CHECK(icx_dominates(X, Y, 6, 48));
      CHECK_FALSE(icx_dominates(Y, X, 6, 48));
    }
  }
  SUBCASE("strictly smaller vector does not dominate") {
    RandomVector X = testing::random_vector(rng, 2, 3, true);
    RandomVector Y(X.values.array() - 1.0, X.prob);
    CHECK_FALSE(icx_dominates(X, Y, 4, 16));
  }
}

TEST_CASE("order consistency of the composed measure") {
  // Uniform scenario probabilities only; the order comparison needs the
  // equal-probability setting.
  Rng rng(515151);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const int m = 2 + rng.uniform_int(2);
    const int n = 3 + rng.uniform_int(3);
    RandomVector X = testing::random_vector(rng, m, n, true);
    RandomVector Y(X.values + MatrixXd::NullaryExpr(m, n, [&](int, int) {
                     return rng.uniform(0.0, 1.5);
                   }),
                   X.prob);
    if (!icx_dominates(X, Y, 5, 20)) continue;
    SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
    CHECK(rho_sys(X, spec) <= rho_sys(Y, spec) + 1e-9);
    ++checked;
  }
  CHECK(checked >= 150);
}
