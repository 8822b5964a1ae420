#pragma once

#include <string>
#include <vector>

#include "sysrisk/qp.hpp"
#include "sysrisk/types.hpp"

namespace sysrisk {

enum class RiskKind {
  Expectation,
  AverageValueAtRisk,       // level alpha in (0, 1]
  MeanUpperSemideviation,   // first order, weight kappa in [0, 1]
};

const char* to_string(RiskKind kind);
RiskKind risk_kind_from_string(const std::string& name);

/// Parametric description of a coherent risk measure on losses
/// (small outcomes preferred).
struct RiskMeasureSpec {
  RiskKind kind = RiskKind::Expectation;
  double alpha = 1.0;  // AVaR only
  double kappa = 0.0;  // semideviation only

  static RiskMeasureSpec expectation() { return {}; }
  static RiskMeasureSpec avar(double alpha) {
    return {RiskKind::AverageValueAtRisk, alpha, 0.0};
  }
  static RiskMeasureSpec semideviation(double kappa) {
    return {RiskKind::MeanUpperSemideviation, 1.0, kappa};
  }

  void validate() const;
};

/// rho[Z] for the given measure.
///   Expectation:            E[Z]
///   AVaR_alpha:             min_eta  eta + E[(Z - eta)_+] / alpha
///   Mean-upper-semidev.:    E[Z] + kappa * E[(Z - E[Z])_+]
double evaluate(const RiskMeasureSpec& spec, const DiscreteRandomVariable& Z);

/// A maximizing density xi of the dual representation at Z:
/// xi >= 0, sum_s p_s xi_s = 1 and sum_s p_s xi_s Z_s = rho[Z].
/// Ties at the AVaR anchor are split in sorted (value desc, index asc)
/// order; semideviation scenarios sitting exactly at the mean get weight
/// from the zero side. Both rules make the output deterministic.
VectorXd subgradient(const RiskMeasureSpec& spec, const DiscreteRandomVariable& Z);

/// Description of the dual set as coordinate bounds on a density plus the
/// normalization sum_s p_s xi_s = 1, with an exact vertex enumerator for
/// small scenario counts.
struct RiskEnvelope {
  RiskMeasureSpec spec;
  ProbabilityVector prob;
  VectorXd lower;  // per-coordinate bounds of the enclosing box
  VectorXd upper;

  static constexpr int kMaxEnumeration = 12;

  /// All extreme points of the dual set. Only defined for
  /// scenarios <= kMaxEnumeration.
  std::vector<VectorXd> vertices() const;
};

RiskEnvelope risk_envelope(const RiskMeasureSpec& spec,
                           const ProbabilityVector& prob);

/// max over enumerated envelope vertices of sum_s p_s xi_s Z_s.
/// Exhaustive and independent of the evaluation path; test oracle only.
double dual_evaluate_bruteforce(const RiskMeasureSpec& spec,
                                const DiscreteRandomVariable& Z);

/// Linear reformulation of  theta >= rho[Z]  for a scenario-indexed affine
/// cost Z. Instantiated on concrete column expressions it appends the
/// defining rows to a constraint block; the auxiliary columns must be
/// reserved by the caller.
struct EpigraphTemplate {
  RiskMeasureSpec spec;

  /// Number of auxiliary columns for a given scenario count.
  /// Semideviation: N shortfall variables. AVaR: N shortfalls plus the
  /// anchor. Expectation: none.
  int aux_count(int scenarios) const;

  /// Whether theta is pinned by an equality (semideviation, expectation)
  /// rather than bounded below (AVaR).
  bool theta_is_equality() const;

  /// Lower/upper bounds of the auxiliary columns, in template order
  /// (shortfalls first, anchor last for AVaR).
  void aux_bounds(int scenarios, VectorXd& lower, VectorXd& upper) const;

  /// Appends the constraint rows. scenario_cost[s] is the affine
  /// expression of the cost in scenario s over the caller's columns.
  void instantiate(const ProbabilityVector& prob,
                   const std::vector<LinearExpr>& scenario_cost,
                   int theta_col, int aux_first_col,
                   RowBlockBuilder& rows) const;
};

EpigraphTemplate epigraph_reformulation(const RiskMeasureSpec& spec);

}  // namespace sysrisk
