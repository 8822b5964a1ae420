#include "sysrisk/systemic.hpp"

#include <algorithm>
#include <cmath>

namespace sysrisk {

namespace {

void check_dims(const RandomVector& X, const SystemicMeasureSpec& spec) {
  spec.validate();
  X.validate();
  require(X.components() == spec.agents(),
          "component count does not match systemic measure");
}

}  // namespace

VectorXd risk_profile(const RandomVector& X, const SystemicMeasureSpec& spec) {
  check_dims(X, spec);
  VectorXd profile(X.components());
  for (int i = 0; i < X.components(); ++i)
    profile[i] = evaluate(spec.inner[i], X.component(i));
  return profile;
}

double rho_sys(const RandomVector& X, const SystemicMeasureSpec& spec) {
  VectorXd profile = risk_profile(X, spec);
  return evaluate(spec.outer,
                  DiscreteRandomVariable(profile, spec.weights.as_prob()));
}

SystemicSubgradient rho_sys_subgradient(const RandomVector& X,
                                        const SystemicMeasureSpec& spec) {
  check_dims(X, spec);
  const int m = X.components();
  SystemicSubgradient g;
  VectorXd profile = risk_profile(X, spec);
  g.nu = subgradient(spec.outer,
                     DiscreteRandomVariable(profile, spec.weights.as_prob()));
  g.xi.resize(m, X.scenarios());
  g.zeta.resize(m, X.scenarios());
  for (int i = 0; i < m; ++i) {
    g.xi.row(i) = subgradient(spec.inner[i], X.component(i)).transpose();
    g.zeta.row(i) = g.nu[i] * g.xi.row(i);
  }
  return g;
}

double rho_scalarized(const RandomVector& X, const ScalarizationSet& S,
                      const RiskMeasureSpec& outer) {
  S.validate();
  X.validate();
  outer.validate();
  for (const auto& w : S.members)
    require(w.size() == X.components(), "scalarization dimension mismatch");
  VectorXd worst(X.scenarios());
  for (int s = 0; s < X.scenarios(); ++s) {
    double best = -kInf;
    for (const auto& w : S.members)
      best = std::max(best, w.c.dot(X.values.col(s)));
    worst[s] = best;
  }
  return evaluate(outer, DiscreteRandomVariable(worst, X.prob));
}

std::vector<VectorXd> simplex_grid(int m, int subdivisions) {
  require(m >= 1 && subdivisions >= 1, "bad simplex grid parameters");
  std::vector<VectorXd> out;
  std::vector<int> counts(m, 0);
  // Lexicographic enumeration of compositions of `subdivisions` into m parts.
  auto rec = [&](auto&& self, int pos, int left) -> void {
    if (pos == m - 1) {
      counts[pos] = left;
      VectorXd c(m);
      for (int i = 0; i < m; ++i)
        c[i] = static_cast<double>(counts[i]) / subdivisions;
      out.push_back(c);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      counts[pos] = k;
      self(self, pos + 1, left - k);
    }
  };
  rec(rec, 0, subdivisions);
  return out;
}

bool icx_dominates(const RandomVector& X, const RandomVector& Y,
                   int c_grid_size, int eta_grid_size) {
  X.validate();
  Y.validate();
  require(X.components() == Y.components() && X.scenarios() == Y.scenarios(),
          "dimension mismatch between compared vectors");
  require(c_grid_size >= 2 && eta_grid_size >= 2, "grids must have size >= 2");

  const double tol = 1e-9;
  for (const VectorXd& c : simplex_grid(X.components(), c_grid_size)) {
    VectorXd vx = X.values.transpose() * c;  // scalarized per scenario
    VectorXd vy = Y.values.transpose() * c;
    double lo = std::min(vx.minCoeff(), vy.minCoeff());
    double hi = std::max(vx.maxCoeff(), vy.maxCoeff());
    for (int t = 0; t < eta_grid_size; ++t) {
      double eta = lo + (hi - lo) * t / (eta_grid_size - 1);
      double ex = X.prob.p.dot((vx.array() - eta).cwiseMax(0.0).matrix());
      double ey = Y.prob.p.dot((vy.array() - eta).cwiseMax(0.0).matrix());
      if (ex > ey + tol) return false;
    }
  }
  return true;
}

}  // namespace sysrisk
