// Test-only reference implementations, independent of the library's
// solution paths, plus random instance generators shared by the suites.
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "sysrisk/model.hpp"
#include "sysrisk/qp.hpp"
#include "sysrisk/solver.hpp"
#include "sysrisk/systemic.hpp"
#include "sysrisk/types.hpp"

namespace sysrisk::testing {

// Global optimum of a strictly convex QP by enumerating active sets and
// solving the equality-restricted problem for each; the optimum is the
// best feasible candidate. Exponential; keep rows below ~14.
inline std::optional<double> enumerate_qp_optimum(const QpProblem& qp,
                                                  double feas_tol = 1e-7) {
  const int n = qp.vars();
  const int k = qp.rows();
  Eigen::MatrixXd P =
      Eigen::MatrixXd(SparseMatrix(qp.P.selfadjointView<Eigen::Upper>()));
  Eigen::MatrixXd A = Eigen::MatrixXd(qp.A);
  std::optional<double> best;

  // Each row can be inactive, at lower, or at upper.
  std::vector<int> choice(k, 0);
  auto feasible = [&](const VectorXd& x) {
    VectorXd ax = A * x;
    for (int i = 0; i < k; ++i)
      if (ax[i] < qp.lower[i] - feas_tol || ax[i] > qp.upper[i] + feas_tol)
        return false;
    return true;
  };
  long total = 1;
  for (int i = 0; i < k; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<int> act;
    VectorXd b(k);
    bool ok = true;
    for (int i = 0; i < k; ++i, c /= 3) {
      choice[i] = static_cast<int>(c % 3);
      if (choice[i] == 1) {
        if (!std::isfinite(qp.lower[i])) { ok = false; break; }
        act.push_back(i);
        b[i] = qp.lower[i];
      } else if (choice[i] == 2) {
        if (!std::isfinite(qp.upper[i])) { ok = false; break; }
        act.push_back(i);
        b[i] = qp.upper[i];
      }
    }
    if (!ok || static_cast<int>(act.size()) > n) continue;
    const int na = static_cast<int>(act.size());
    Eigen::MatrixXd K(n + na, n + na);
    K.setZero();
    K.topLeftCorner(n, n) = P;
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -qp.q;
    for (int t = 0; t < na; ++t) {
      K.block(0, n + t, n, 1) = A.row(act[t]).transpose();
      K.block(n + t, 0, 1, n) = A.row(act[t]);
      rhs[n + t] = b[act[t]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    VectorXd sol = lu.solve(rhs);
    VectorXd x = sol.head(n);
    if (!feasible(x)) continue;
    double obj = 0.5 * x.dot(P * x) + qp.q.dot(x);
    if (!best || obj < *best) best = obj;
  }
  return best;
}

inline DiscreteRandomVariable random_drv(Rng& rng, int scenarios,
                                         bool uniform_prob = false) {
  VectorXd values(scenarios);
  for (int s = 0; s < scenarios; ++s) values[s] = rng.uniform(-10.0, 10.0);
  if (uniform_prob)
    return DiscreteRandomVariable(values, ProbabilityVector::uniform(scenarios));
  VectorXd w(scenarios);
  double sum = 0.0;
  for (int s = 0; s < scenarios; ++s) {
    w[s] = rng.uniform(0.05, 1.0);
    sum += w[s];
  }
  w /= sum;
  w[scenarios - 1] += 1.0 - w.sum();  // exact normalization
  return DiscreteRandomVariable(values, ProbabilityVector(w));
}

inline RiskMeasureSpec random_spec(Rng& rng) {
  switch (rng.uniform_int(3)) {
    case 0: return RiskMeasureSpec::expectation();
    case 1: return RiskMeasureSpec::avar(rng.uniform(0.1, 1.0));
    default: return RiskMeasureSpec::semideviation(rng.uniform(0.0, 1.0));
  }
}

inline RandomVector random_vector(Rng& rng, int components, int scenarios,
                                  bool uniform_prob = false) {
  DiscreteRandomVariable base = random_drv(rng, scenarios, uniform_prob);
  MatrixXd values(components, scenarios);
  for (int i = 0; i < components; ++i)
    for (int s = 0; s < scenarios; ++s) values(i, s) = rng.uniform(-10.0, 10.0);
  return RandomVector(values, base.prob);
}

inline SystemicMeasureSpec random_systemic_spec(Rng& rng, int components,
                                                bool law_invariant_only = false) {
  SystemicMeasureSpec spec;
  spec.outer = random_spec(rng);
  for (int i = 0; i < components; ++i) spec.inner.push_back(random_spec(rng));
  (void)law_invariant_only;
  VectorXd c(components);
  double sum = 0.0;
  for (int i = 0; i < components; ++i) {
    c[i] = rng.uniform(0.05, 1.0);
    sum += c[i];
  }
  c /= sum;
  c[components - 1] += 1.0 - c.sum();
  spec.weights = ScalarizationWeights(c);
  return spec;
}

// Small feasible-by-construction two-stage instance with compact sets.
// A feasible anchor point is drawn first and the right-hand sides are set
// from it, so the coupled system always admits a solution.
inline TwoStageSystemProblem random_two_stage(Rng& rng, int agents,
                                              int scenarios) {
  TwoStageSystemProblem p;
  p.agents = agents;
  p.scenarios = scenarios;
  {
    VectorXd w(scenarios);
    double sum = 0.0;
    for (int s = 0; s < scenarios; ++s) {
      w[s] = rng.uniform(0.2, 1.0);
      sum += w[s];
    }
    w /= sum;
    w[scenarios - 1] += 1.0 - w.sum();
    p.prob = ProbabilityVector(w);
  }
  const int n1 = 1 + rng.uniform_int(2);
  const int n2 = 1 + rng.uniform_int(2);
  const int d1 = rng.uniform_int(2);
  const int d2 = 1 + rng.uniform_int(2);
  const int d3 = rng.uniform_int(2);
  p.systemic_dim = d3;

  std::vector<VectorXd> x0(agents), y0s;
  p.first_stage.resize(agents);
  p.second_stage.resize(agents);

  std::vector<std::vector<VectorXd>> y0(agents,
                                        std::vector<VectorXd>(scenarios));
  std::vector<VectorXd> z0(scenarios);
  for (int i = 0; i < agents; ++i) {
    x0[i] = VectorXd(n1);
    for (int j = 0; j < n1; ++j) x0[i][j] = rng.uniform(-1.0, 1.0);
    for (int s = 0; s < scenarios; ++s) {
      y0[i][s] = VectorXd(n2);
      for (int j = 0; j < n2; ++j) y0[i][s][j] = rng.uniform(-1.0, 1.0);
    }
  }
  for (int s = 0; s < scenarios; ++s) {
    z0[s] = VectorXd(d3);
    for (int j = 0; j < d3; ++j) z0[s][j] = rng.uniform(0.0, 1.0);
  }

  std::vector<MatrixXd> B(scenarios);
  for (int s = 0; s < scenarios; ++s) {
    B[s] = MatrixXd(d2, d3);
    for (int r = 0; r < d2; ++r)
      for (int j = 0; j < d3; ++j) B[s](r, j) = rng.uniform(-1.0, 1.0);
  }

  VectorXd coupling_total = VectorXd::Zero(d1);
  for (int i = 0; i < agents; ++i) {
    auto& fs = p.first_stage[i];
    fs.cost = VectorXd(n1);
    for (int j = 0; j < n1; ++j) fs.cost[j] = rng.uniform(-1.0, 1.0);
    fs.cost_offset = 0.0;
    fs.set = LocalSet::box(x0[i].array() - rng.uniform(0.5, 2.0),
                           x0[i].array() + rng.uniform(0.5, 2.0));
    fs.coupling = MatrixXd(d1, n1);
    for (int r = 0; r < d1; ++r)
      for (int j = 0; j < n1; ++j) fs.coupling(r, j) = rng.uniform(-1.0, 1.0);
    coupling_total += fs.coupling * x0[i];

    p.second_stage[i].resize(scenarios);
    for (int s = 0; s < scenarios; ++s) {
      auto& ss = p.second_stage[i][s];
      ss.cost = VectorXd(n2);
      for (int j = 0; j < n2; ++j) ss.cost[j] = rng.uniform(0.0, 2.0);
      ss.tech = MatrixXd(d2, n1);
      ss.recourse = MatrixXd(d2, n2);
      for (int r = 0; r < d2; ++r) {
        for (int j = 0; j < n1; ++j) ss.tech(r, j) = rng.uniform(-1.0, 1.0);
        for (int j = 0; j < n2; ++j) ss.recourse(r, j) = rng.uniform(-1.0, 1.0);
      }
      ss.set = LocalSet::box(y0[i][s].array() - rng.uniform(0.5, 2.0),
                             y0[i][s].array() + rng.uniform(0.5, 2.0));
      ss.link_tech.resize(0, n1);
      ss.link_recourse.resize(0, n2);
      ss.link_lower.resize(0);
      ss.link_upper.resize(0);
      ss.offset.resize(d2);  // filled below
    }
  }
  p.coupling_rhs = coupling_total;

  if (d3 > 0) {
    for (int s = 0; s < scenarios; ++s) {
      SystemicStage st;
      st.coupling = B[s];
      st.cost = VectorXd(d3);
      for (int j = 0; j < d3; ++j) st.cost[j] = rng.uniform(0.0, 1.0);
      st.set = LocalSet::box(VectorXd::Zero(d3), VectorXd::Constant(d3, 2.0));
      p.systemic.push_back(std::move(st));
    }
  }
  for (int i = 0; i < agents; ++i)
    for (int s = 0; s < scenarios; ++s) {
      auto& ss = p.second_stage[i][s];
      VectorXd h = ss.tech * x0[i];
      for (int j = 0; j < agents; ++j)
        h += p.second_stage[j][s].recourse * y0[j][s];
      if (d3 > 0) h += B[s] * z0[s];
      ss.offset = h;
    }

  SystemicMeasureSpec risk;
  risk.outer = rng.uniform_int(2) == 0
                   ? RiskMeasureSpec::expectation()
                   : RiskMeasureSpec::semideviation(rng.uniform(0.1, 1.0));
  for (int i = 0; i < agents; ++i)
    risk.inner.push_back(rng.uniform_int(2) == 0
                             ? RiskMeasureSpec::semideviation(rng.uniform(0.0, 1.0))
                             : RiskMeasureSpec::avar(rng.uniform(0.3, 1.0)));
  VectorXd c(agents);
  double sum = 0.0;
  for (int i = 0; i < agents; ++i) {
    c[i] = rng.uniform(0.2, 1.0);
    sum += c[i];
  }
  c /= sum;
  c[agents - 1] += 1.0 - c.sum();
  risk.weights = ScalarizationWeights(c);
  p.risk = risk;
  p.validate();
  return p;
}

// Centralized solve of the extended problem with outer-measure cuts added
// until none is violated; reference for the consensus + cut machinery.
struct ExtendedCentralResult {
  double objective = 0.0;
  std::vector<VectorXd> blocks;
  ExtendedProblem problem;
  bool solved = false;
};

inline ExtendedCentralResult solve_extended_central(ExtendedProblem ext,
                                                    double cut_tol = 1e-7,
                                                    int max_rounds = 60) {
  ExtendedCentralResult out;
  QpSettings settings;
  settings.eps_abs = 1e-9;
  settings.eps_rel = 1e-9;
  for (int round = 0; round < max_rounds; ++round) {
    QpProblem qp = assemble_extended_qp(ext);
    QpResult res = solve_convex_qp(qp, settings);
    if (!res.solved()) return out;
    std::vector<VectorXd> blocks(ext.base.agents);
    for (int i = 0; i < ext.base.agents; ++i)
      blocks[i] = res.x.segment(ext.agent_offset(i), ext.layout[i].size());
    PrimalState state{blocks};
    VectorXd theta = state.theta(ext);
    VectorXd nu = generate_cut(theta, ext.base.risk.outer, ext.base.risk.weights);
    const VectorXd& c = ext.base.risk.weights.c;
    double eta_bar = c.dot(state.eta(ext));
    double supported = c.dot(nu.cwiseProduct(theta));
    if (supported <= eta_bar + cut_tol * (1.0 + std::abs(eta_bar))) {
      out.objective = ext.objective_value(blocks);
      out.blocks = std::move(blocks);
      out.problem = std::move(ext);
      out.solved = true;
      return out;
    }
    ExtendedProblem grown = with_added_cut(ext, nu);
    if (grown.pool.size() == ext.pool.size()) {
      out.objective = ext.objective_value(blocks);
      out.blocks = std::move(blocks);
      out.problem = std::move(ext);
      out.solved = true;
      return out;
    }
    ext = std::move(grown);
  }
  return out;
}

}  // namespace sysrisk::testing
