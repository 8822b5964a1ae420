#pragma once

#include <vector>

#include "sysrisk/measures.hpp"
#include "sysrisk/types.hpp"

namespace sysrisk {

/// Point on the m-simplex weighting the system components.
struct ScalarizationWeights {
  VectorXd c;

  ScalarizationWeights() = default;
  explicit ScalarizationWeights(VectorXd weights) : c(std::move(weights)) {
    validate();
  }

  static ScalarizationWeights uniform(int m) {
    return ScalarizationWeights(VectorXd::Constant(m, 1.0 / m));
  }

  int size() const { return static_cast<int>(c.size()); }

  void validate() const {
    require(c.size() >= 1, "empty scalarization vector");
    require((c.array() >= 0.0).all(), "scalarization weights must be >= 0");
    require(std::abs(c.sum() - 1.0) <= kProbTol,
            "scalarization weights must sum to one");
  }

  /// The weights viewed as a probability mass function on {1..m}.
  ProbabilityVector as_prob() const { return ProbabilityVector(c); }
};

/// Outer measure, per-component inner measures, and component weights.
struct SystemicMeasureSpec {
  RiskMeasureSpec outer;
  std::vector<RiskMeasureSpec> inner;
  ScalarizationWeights weights;

  int agents() const { return static_cast<int>(inner.size()); }

  void validate() const {
    outer.validate();
    for (const auto& spec : inner) spec.validate();
    weights.validate();
    require(static_cast<int>(inner.size()) == weights.size(),
            "inner measure count must match weight count");
  }
};

/// Finite set of scalarization vectors.
struct ScalarizationSet {
  std::vector<ScalarizationWeights> members;

  void validate() const {
    require(!members.empty(), "scalarization set is empty");
    for (const auto& w : members) w.validate();
  }
};

/// Subgradient of the composed measure: zeta(i,s) = nu_i * xi(i,s) with
/// nu a density on the weighted component space and each row xi_i a
/// density on the scenario space.
struct SystemicSubgradient {
  MatrixXd zeta;  // m x N
  VectorXd nu;    // m
  MatrixXd xi;    // m x N
};

/// Component risks: entry i is the inner measure of row i of X.
VectorXd risk_profile(const RandomVector& X, const SystemicMeasureSpec& spec);

/// Outer measure applied to the risk profile on the weighted space.
double rho_sys(const RandomVector& X, const SystemicMeasureSpec& spec);

SystemicSubgradient rho_sys_subgradient(const RandomVector& X,
                                        const SystemicMeasureSpec& spec);

/// Aggregate-then-evaluate measure: per scenario take the maximum of
/// c^T X over the set, then apply the univariate measure.
double rho_scalarized(const RandomVector& X, const ScalarizationSet& S,
                      const RiskMeasureSpec& outer);

/// All lattice points {k/subdivisions : sum k = subdivisions} on the
/// m-simplex, in lexicographic order.
std::vector<VectorXd> simplex_grid(int m, int subdivisions);

/// Sufficient grid check of the scalarized increasing convex order:
/// E[(c'X - eta)_+] <= E[(c'Y - eta)_+] for every grid scalarization c and
/// every eta on a grid spanning all scalarized values. Test utility.
bool icx_dominates(const RandomVector& X, const RandomVector& Y,
                   int c_grid_size, int eta_grid_size);

}  // namespace sysrisk
