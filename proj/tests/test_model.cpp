#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "sysrisk/io.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/solver.hpp"

using namespace sysrisk;

TEST_CASE("homogenize") {
  Rng rng(101);
  SUBCASE("already homogeneous problems are returned unchanged") {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 2, 3);
    p.coupling_rhs.setZero();
    for (auto& per_agent : p.second_stage)
      for (auto& ss : per_agent) ss.offset.setZero();
    HomogenizeResult res = homogenize(p);
    CHECK_FALSE(res.first_stage_extended);
    CHECK_FALSE(res.second_stage_extended);
    CHECK(res.problem.first_stage[0].set.dim() == p.first_stage[0].set.dim());
  }
  SUBCASE("dimension bookkeeping") {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 3, 2);
    while (p.first_stage_rows() == 0 ||
           p.coupling_rhs.cwiseAbs().maxCoeff() < 0.1)
      p = testing::random_two_stage(rng, 3, 2);
    const int n1 = p.first_stage[0].set.dim();
    const int d1 = p.first_stage_rows();
    HomogenizeResult res = homogenize(p);
    CHECK(res.first_stage_extended);
    CHECK(res.problem.first_stage[0].set.dim() == n1 + 1);
    CHECK(res.problem.first_stage_rows() == d1);
    CHECK(res.problem.homogeneous());
    // The appended component is pinned to one.
    CHECK(res.problem.first_stage[0].set.lower[n1] == 1.0);
    CHECK(res.problem.first_stage[0].set.upper[n1] == 1.0);
  }
  SUBCASE("value preservation on random instances") {
    for (int t = 0; t < 10; ++t) {
      TwoStageSystemProblem p =
          testing::random_two_stage(rng, 1 + rng.uniform_int(3), 2 + rng.uniform_int(3));
      CentralizedSolution before = solve_centralized(p);
      REQUIRE(before.solved());
      CentralizedSolution after = solve_centralized(homogenize(p).problem);
      REQUIRE(after.solved());
      CHECK(after.objective ==
            doctest::Approx(before.objective).epsilon(1e-7));
    }
  }
  SUBCASE("single-agent toy with a nonzero budget row") {
    // min x + E[2y] s.t. x = 3, y >= 1 - x (per scenario), boxes.
    TwoStageSystemProblem p;
    p.agents = 1;
    p.scenarios = 2;
    p.prob = ProbabilityVector::uniform(2);
    p.coupling_rhs = VectorXd::Constant(1, 3.0);
    p.systemic_dim = 0;
    AgentFirstStage fs;
    fs.cost = VectorXd::Constant(1, 1.0);
    fs.set = LocalSet::box(VectorXd::Zero(1), VectorXd::Constant(1, 10.0));
    fs.coupling = MatrixXd::Ones(1, 1);
    p.first_stage.push_back(fs);
    p.second_stage.resize(1);
    for (int s = 0; s < 2; ++s) {
      AgentSecondStage ss;
      ss.cost = VectorXd::Constant(1, 2.0);
      ss.tech = MatrixXd::Ones(1, 1);
      ss.recourse = MatrixXd::Ones(1, 1);
      ss.offset = VectorXd::Constant(1, 1.0 + s);  // x + y = 1 + s
      ss.set = LocalSet::box(VectorXd::Constant(1, -10.0),
                             VectorXd::Constant(1, 10.0));
      ss.link_tech.resize(0, 1);
      ss.link_recourse.resize(0, 1);
      p.second_stage[0].push_back(ss);
    }
    p.risk.outer = RiskMeasureSpec::expectation();
    p.risk.inner.push_back(RiskMeasureSpec::semideviation(0.5));
    p.risk.weights = ScalarizationWeights::uniform(1);
    // x = 3 forces y_s = (1+s) - 3, so Q = (-4, -2): E[Q] = -3 and the
    // upper semideviation is 0.5; objective 3 + (-3 + 0.5 * 0.5) = 0.25.
    CentralizedSolution before = solve_centralized(p);
    REQUIRE(before.solved());
    CHECK(before.objective == doctest::Approx(0.25).epsilon(1e-7));
    CentralizedSolution after = solve_centralized(homogenize(p).problem);
    REQUIRE(after.solved());
    CHECK(after.objective == doctest::Approx(before.objective).epsilon(1e-7));
  }
}

TEST_CASE("spanning trees") {
  CHECK(SpanningTree::path(1).valid());
  CHECK(SpanningTree::path(4).valid());
  SpanningTree broken;
  broken.nodes = 4;
  broken.arcs = {{0, 1}, {2, 3}};  // two arcs, disconnected
  CHECK_FALSE(broken.valid());
  SpanningTree cycle;
  cycle.nodes = 3;
  cycle.arcs = {{0, 1}, {1, 2}, {2, 0}};
  CHECK_FALSE(cycle.valid());
}

TEST_CASE("cut pool") {
  CutPool pool = CutPool::initial(3);
  CHECK(pool.size() == 1);
  VectorXd nu(3);
  nu << 1.5, 0.9, 0.6;
  CHECK(pool.add(nu));
  CHECK_FALSE(pool.add(nu));  // duplicate
  CHECK(pool.size() == 2);
  pool.validate(ScalarizationWeights::uniform(3));
  VectorXd bad(3);
  bad << 2.0, 0.5, 0.4;  // weighted sum != 1
  CutPool wrong;
  wrong.cuts.push_back(bad);
  CHECK_THROWS_AS(wrong.validate(ScalarizationWeights::uniform(3)),
                  InvalidInput);
}

TEST_CASE("generate_cut") {
  SUBCASE("expectation outer always yields the unit cut") {
    VectorXd theta(4);
    theta << 3.0, -1.0, 2.0, 0.5;
    VectorXd nu = generate_cut(theta, RiskMeasureSpec::expectation(),
                               ScalarizationWeights::uniform(4));
    CHECK((nu.array() - 1.0).abs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("published profile value is supported exactly") {
    VectorXd theta(5);
    theta << 13.67, 12.35, 12.35, 12.35, 11.03;
    ScalarizationWeights c = ScalarizationWeights::uniform(5);
    VectorXd nu = generate_cut(theta, RiskMeasureSpec::semideviation(0.5), c);
    CHECK(c.c.dot(nu.cwiseProduct(theta)) ==
          doctest::Approx(12.48).epsilon(0.0005));
  }
  SUBCASE("cuts support the outer measure from below") {
    Rng rng(404);
    for (int t = 0; t < 200; ++t) {
      const int m = 2 + rng.uniform_int(4);
      SystemicMeasureSpec spec = testing::random_systemic_spec(rng, m);
      VectorXd theta(m), other(m);
      for (int i = 0; i < m; ++i) {
        theta[i] = rng.uniform(-5.0, 5.0);
        other[i] = rng.uniform(-5.0, 5.0);
      }
      VectorXd nu = generate_cut(theta, spec.outer, spec.weights);
      DiscreteRandomVariable profile(other, spec.weights.as_prob());
      CHECK(spec.weights.c.dot(nu.cwiseProduct(other)) <=
            evaluate(spec.outer, profile) + 1e-9);
      DiscreteRandomVariable at(theta, spec.weights.as_prob());
      CHECK(spec.weights.c.dot(nu.cwiseProduct(theta)) ==
            doctest::Approx(evaluate(spec.outer, at)).epsilon(1e-9));
    }
  }
}

TEST_CASE("extended problem structure") {
  Rng rng(71);
  SUBCASE("single agent has no consensus rows") {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 1, 3);
    ExtendedProblem ext = build_extended(p);
    CHECK(ext.span(Family::ConsensusV).size == 0);
    CHECK(ext.span(Family::ConsensusZ).size == 0);
  }
  SUBCASE("star tree consensus block counts") {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 3, 2);
    SpanningTree star;
    star.nodes = 3;
    star.arcs = {{0, 1}, {0, 2}};
    std::vector<SpanningTree> strees(p.scenarios, star);
    ExtendedProblem ext =
        build_extended(p, star, strees, CutPool::initial(3));
    CHECK(ext.span(Family::ConsensusV).size == 2 * (1 + 1));
    if (p.systemic_dim > 0)
      CHECK(ext.span(Family::ConsensusZ).size ==
            2 * p.scenarios * p.systemic_dim);
    CHECK(ext.span(Family::Cuts).size == 1);
    CHECK(ext.span(Family::Dynamics).size ==
          3 * p.scenarios * p.dynamics_rows());
  }
  SUBCASE("validation catches tree defects and unbounded sets") {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 3, 2);
    ExtendedProblem ext = build_extended(p);
    CHECK(validate(ext).ok);

    ExtendedProblem broken = ext;
    broken.tree.arcs.pop_back();  // m-2 arcs
    ValidationReport r1 = validate(broken);
    CHECK_FALSE(r1.ok);
    bool mentions_disconnected = false;
    for (const auto& s : r1.issues)
      mentions_disconnected |= s.find("disconnected") != std::string::npos;
    CHECK(mentions_disconnected);

    ExtendedProblem unbounded = ext;
    unbounded.base.second_stage[1][0].set.upper[0] = kInf;
    ValidationReport r2 = validate(unbounded);
    CHECK_FALSE(r2.ok);
    bool mentions_compact = false;
    for (const auto& s : r2.issues)
      mentions_compact |= s.find("compactness") != std::string::npos;
    CHECK(mentions_compact);
  }
  SUBCASE("coupling rows touch at least two agents on multi-agent instances") {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 3, 2);
    ExtendedProblem ext = build_extended(p);
    for (const auto& row : ext.coupling)
      if (row.family == Family::ConsensusV || row.family == Family::ConsensusZ ||
          row.family == Family::Cuts)
        CHECK(row.touched_agents() >= 2);
  }
}

TEST_CASE("extended central solve equals the compact reference") {
  Rng rng(31415);
  int done = 0;
  for (int t = 0; t < 20; ++t) {
    const int m = 1 + rng.uniform_int(3);
    const int N = 2 + rng.uniform_int(3);
    TwoStageSystemProblem p = testing::random_two_stage(rng, m, N);
    CentralizedSolution compact = solve_centralized(p);
    REQUIRE(compact.solved());
    TwoStageSystemProblem hom = homogenize(p).problem;
    testing::ExtendedCentralResult ext =
        testing::solve_extended_central(build_extended(hom));
    REQUIRE(ext.solved);
    CHECK(ext.objective == doctest::Approx(compact.objective).epsilon(1e-6));
    ++done;
  }
  CHECK(done == 20);
}

TEST_CASE("consensus stacks agree at the extended optimum") {
  Rng rng(246);
  TwoStageSystemProblem p = testing::random_two_stage(rng, 3, 3);
  TwoStageSystemProblem hom = homogenize(p).problem;
  testing::ExtendedCentralResult res =
      testing::solve_extended_central(build_extended(hom));
  REQUIRE(res.solved);
  const ExtendedProblem& ext = res.problem;
  const int L = ext.pool.size();
  for (int i = 1; i < 3; ++i)
    for (int l = 0; l <= L; ++l) {
      double a = res.blocks[0][ext.layout[0].v_col(l)];
      double b = res.blocks[i][ext.layout[i].v_col(l)];
      CHECK(std::abs(a - b) < 1e-6);
    }
}

TEST_CASE("cut monotonicity and soundness at the central optimum") {
  Rng rng(135);
  for (int t = 0; t < 5; ++t) {
    TwoStageSystemProblem p = testing::random_two_stage(rng, 2, 3);
    p.risk.outer = RiskMeasureSpec::semideviation(0.6);
    TwoStageSystemProblem hom = homogenize(p).problem;
    ExtendedProblem ext = build_extended(hom);
    QpSettings settings;
    settings.eps_abs = settings.eps_rel = 1e-9;

    QpResult first = solve_convex_qp(assemble_extended_qp(ext), settings);
    REQUIRE(first.solved());
    std::vector<VectorXd> blocks(2);
    for (int i = 0; i < 2; ++i)
      blocks[i] = first.x.segment(ext.agent_offset(i), ext.layout[i].size());
    double value_before = ext.objective_value(blocks);

    PrimalState state{blocks};
    VectorXd theta = state.theta(ext);
    VectorXd nu = generate_cut(theta, hom.risk.outer, hom.risk.weights);
    ExtendedProblem grown = with_added_cut(ext, nu);
    QpResult second = solve_convex_qp(assemble_extended_qp(grown), settings);
    REQUIRE(second.solved());
    std::vector<VectorXd> blocks2(2);
    for (int i = 0; i < 2; ++i)
      blocks2[i] =
          second.x.segment(grown.agent_offset(i), grown.layout[i].size());
    double value_after = grown.objective_value(blocks2);

    // More cuts can only tighten the relaxation...
    CHECK(value_after >= value_before - 1e-7);
    // ...and never cut off the true optimum.
    CentralizedSolution exact = solve_centralized(p);
    REQUIRE(exact.solved());
    CHECK(value_after <= exact.objective + 1e-6);
  }
}

TEST_CASE("problem JSON round trip") {
  Rng rng(9090);
  for (int t = 0; t < 5; ++t) {
    TwoStageSystemProblem p =
        testing::random_two_stage(rng, 1 + rng.uniform_int(3), 2 + rng.uniform_int(3));
    Json j = problem_to_json(p);
    TwoStageSystemProblem q = problem_from_json(j);
    CHECK(problem_to_json(q) == j);  // fixpoint after one round trip
    CentralizedSolution a = solve_centralized(p);
    CentralizedSolution b = solve_centralized(q);
    REQUIRE(a.solved());
    REQUIRE(b.solved());
    CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-10));
  }
}
