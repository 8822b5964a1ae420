#include "sysrisk/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sysrisk {

const char* to_string(RiskKind kind) {
  switch (kind) {
    case RiskKind::Expectation: return "expectation";
    case RiskKind::AverageValueAtRisk: return "avar";
    case RiskKind::MeanUpperSemideviation: return "semideviation";
  }
  return "unknown";
}

RiskKind risk_kind_from_string(const std::string& name) {
  if (name == "expectation") return RiskKind::Expectation;
  if (name == "avar") return RiskKind::AverageValueAtRisk;
  if (name == "semideviation") return RiskKind::MeanUpperSemideviation;
  throw InvalidInput("unknown risk measure kind: " + name);
}

void RiskMeasureSpec::validate() const {
  switch (kind) {
    case RiskKind::Expectation:
      break;
    case RiskKind::AverageValueAtRisk:
      require(alpha > 0.0 && alpha <= 1.0, "AVaR level must be in (0, 1]");
      break;
    case RiskKind::MeanUpperSemideviation:
      require(kappa >= 0.0 && kappa <= 1.0,
              "semideviation weight must be in [0, 1]");
      break;
  }
}

namespace {

// Scenario indices sorted by loss descending, index ascending on ties.
std::vector<int> sort_desc(const VectorXd& values) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return values[a] > values[b];
  });
  return idx;
}

double evaluate_avar(double alpha, const DiscreteRandomVariable& Z) {
  // Mean of the worst alpha-fraction of losses: walk scenarios from the
  // largest loss down, consuming probability mass until alpha is filled.
  double remaining = alpha;
  double acc = 0.0;
  for (int s : sort_desc(Z.values)) {
    if (remaining <= 0.0) break;
    double take = std::min(Z.prob[s], remaining);
    acc += take * Z.values[s];
    remaining -= take;
  }
  return acc / alpha;
}

}  // namespace

double evaluate(const RiskMeasureSpec& spec, const DiscreteRandomVariable& Z) {
  spec.validate();
  Z.validate();
  switch (spec.kind) {
    case RiskKind::Expectation:
      return Z.expectation();
    case RiskKind::AverageValueAtRisk:
      return evaluate_avar(spec.alpha, Z);
    case RiskKind::MeanUpperSemideviation: {
      double mean = Z.expectation();
      double dev = Z.prob.p.dot((Z.values.array() - mean).cwiseMax(0.0).matrix());
      return mean + spec.kappa * dev;
    }
  }
  throw InvalidInput("unsupported risk measure kind");
}

VectorXd subgradient(const RiskMeasureSpec& spec,
                     const DiscreteRandomVariable& Z) {
  spec.validate();
  Z.validate();
  const int n = Z.scenarios();
  switch (spec.kind) {
    case RiskKind::Expectation:
      return VectorXd::Ones(n);
    case RiskKind::AverageValueAtRisk: {
      VectorXd xi = VectorXd::Zero(n);
      double remaining = spec.alpha;
      for (int s : sort_desc(Z.values)) {
        if (remaining <= 0.0) break;
        if (Z.prob[s] == 0.0) continue;
        double take = std::min(Z.prob[s], remaining);
        xi[s] = take / (spec.alpha * Z.prob[s]);
        remaining -= take;
      }
      return xi;
    }
    case RiskKind::MeanUpperSemideviation: {
      double mean = Z.expectation();
      VectorXd h(n);
      for (int s = 0; s < n; ++s) h[s] = Z.values[s] > mean ? spec.kappa : 0.0;
      double eh = Z.prob.p.dot(h);
      return VectorXd::Ones(n) * (1.0 - eh) + h;
    }
  }
  throw InvalidInput("unsupported risk measure kind");
}

RiskEnvelope risk_envelope(const RiskMeasureSpec& spec,
                           const ProbabilityVector& prob) {
  spec.validate();
  prob.validate();
  const int n = prob.size();
  RiskEnvelope env;
  env.spec = spec;
  env.prob = prob;
  switch (spec.kind) {
    case RiskKind::Expectation:
      env.lower = VectorXd::Ones(n);
      env.upper = VectorXd::Ones(n);
      break;
    case RiskKind::AverageValueAtRisk:
      env.lower = VectorXd::Zero(n);
      env.upper = VectorXd::Constant(n, 1.0 / spec.alpha);
      break;
    case RiskKind::MeanUpperSemideviation:
      // xi = 1 + h - E[h] with h in [0, kappa]^N.
      env.lower = VectorXd::Constant(n, 1.0 - spec.kappa);
      env.upper = VectorXd::Constant(n, 1.0 + spec.kappa);
      break;
  }
  return env;
}

std::vector<VectorXd> RiskEnvelope::vertices() const {
  const int n = prob.size();
  require(n <= kMaxEnumeration, "scenario count too large for enumeration");
  std::vector<VectorXd> out;
  switch (spec.kind) {
    case RiskKind::Expectation:
      out.push_back(VectorXd::Ones(n));
      break;
    case RiskKind::AverageValueAtRisk: {
      // Vertices of {0 <= xi <= 1/alpha, sum p xi = 1}: a saturated subset
      // plus at most one fractional coordinate absorbing the rest.
      const double alpha = spec.alpha;
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        double mass = 0.0;
        for (int s = 0; s < n; ++s)
          if (mask & (1u << s)) mass += prob[s];
        if (mass > alpha + 1e-12) continue;
        VectorXd base = VectorXd::Zero(n);
        for (int s = 0; s < n; ++s)
          if (mask & (1u << s)) base[s] = 1.0 / alpha;
        double rest = alpha - mass;
        if (rest <= 1e-12) {
          out.push_back(base);
          continue;
        }
        for (int t = 0; t < n; ++t) {
          if (mask & (1u << t)) continue;
          if (prob[t] + 1e-12 < rest) continue;  // fraction would overflow
          if (prob[t] == 0.0) continue;
          VectorXd v = base;
          v[t] = rest / (alpha * prob[t]);
          out.push_back(v);
        }
      }
      break;
    }
    case RiskKind::MeanUpperSemideviation: {
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        VectorXd h = VectorXd::Zero(n);
        for (int s = 0; s < n; ++s)
          if (mask & (1u << s)) h[s] = spec.kappa;
        double eh = prob.p.dot(h);
        out.push_back(VectorXd::Ones(n) * (1.0 - eh) + h);
      }
      break;
    }
  }
  return out;
}

double dual_evaluate_bruteforce(const RiskMeasureSpec& spec,
                                const DiscreteRandomVariable& Z) {
  RiskEnvelope env = risk_envelope(spec, Z.prob);
  double best = -kInf;
  for (const VectorXd& xi : env.vertices())
    best = std::max(best, Z.prob.p.dot(xi.cwiseProduct(Z.values)));
  return best;
}

int EpigraphTemplate::aux_count(int scenarios) const {
  switch (spec.kind) {
    case RiskKind::Expectation: return 0;
    case RiskKind::AverageValueAtRisk: return scenarios + 1;
    case RiskKind::MeanUpperSemideviation: return scenarios;
  }
  return 0;
}

bool EpigraphTemplate::theta_is_equality() const {
  return spec.kind != RiskKind::AverageValueAtRisk;
}

void EpigraphTemplate::aux_bounds(int scenarios, VectorXd& lower,
                                  VectorXd& upper) const {
  const int na = aux_count(scenarios);
  lower = VectorXd::Zero(na);
  upper = VectorXd::Constant(na, kInf);
  if (spec.kind == RiskKind::AverageValueAtRisk) lower[na - 1] = -kInf;  // anchor
}

void EpigraphTemplate::instantiate(const ProbabilityVector& prob,
                                   const std::vector<LinearExpr>& scenario_cost,
                                   int theta_col, int aux_first_col,
                                   RowBlockBuilder& rows) const {
  const int n = prob.size();
  require(static_cast<int>(scenario_cost.size()) == n,
          "scenario cost count mismatch");
  switch (spec.kind) {
    case RiskKind::Expectation: {
      // theta - sum_s p_s Q_s = 0
      int r = rows.begin_row(0.0, 0.0);
      rows.coeff(r, theta_col, 1.0);
      for (int s = 0; s < n; ++s) rows.add_expr(r, scenario_cost[s], -prob[s]);
      break;
    }
    case RiskKind::MeanUpperSemideviation: {
      // t_s >= Q_s - sum_l p_l Q_l,  t_s >= 0 (bounds)
      for (int s = 0; s < n; ++s) {
        int r = rows.begin_row(0.0, kInf);
        rows.coeff(r, aux_first_col + s, 1.0);
        rows.add_expr(r, scenario_cost[s], -1.0);
        for (int l = 0; l < n; ++l) rows.add_expr(r, scenario_cost[l], prob[l]);
      }
      // theta = sum p_s Q_s + kappa sum p_s t_s
      int r = rows.begin_row(0.0, 0.0);
      rows.coeff(r, theta_col, 1.0);
      for (int s = 0; s < n; ++s) {
        rows.add_expr(r, scenario_cost[s], -prob[s]);
        rows.coeff(r, aux_first_col + s, -spec.kappa * prob[s]);
      }
      break;
    }
    case RiskKind::AverageValueAtRisk: {
      const int anchor = aux_first_col + n;
      // t_s + eta - Q_s >= 0
      for (int s = 0; s < n; ++s) {
        int r = rows.begin_row(0.0, kInf);
        rows.coeff(r, aux_first_col + s, 1.0);
        rows.coeff(r, anchor, 1.0);
        rows.add_expr(r, scenario_cost[s], -1.0);
      }
      // theta - eta - (1/alpha) sum p_s t_s >= 0
      int r = rows.begin_row(0.0, kInf);
      rows.coeff(r, theta_col, 1.0);
      rows.coeff(r, anchor, -1.0);
      for (int s = 0; s < n; ++s)
        rows.coeff(r, aux_first_col + s, -prob[s] / spec.alpha);
      break;
    }
  }
}

EpigraphTemplate epigraph_reformulation(const RiskMeasureSpec& spec) {
  spec.validate();
  return EpigraphTemplate{spec};
}

}  // namespace sysrisk
