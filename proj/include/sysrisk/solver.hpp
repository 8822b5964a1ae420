#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sysrisk/model.hpp"
#include "sysrisk/qp.hpp"

namespace sysrisk {

/// Per-agent primal variable blocks, laid out per ExtendedProblem::layout.
struct PrimalState {
  std::vector<VectorXd> blocks;

  int agents() const { return static_cast<int>(blocks.size()); }
  VectorXd theta(const ExtendedProblem& ext) const;
  VectorXd eta(const ExtendedProblem& ext) const;
  double eta_spread(const ExtendedProblem& ext) const;
};

/// Multipliers, one per coupling row of the extended problem, in row order
/// (cuts, first stage, dynamics, systemic cost, v-consensus, z-consensus).
/// The previous vector and the last applied increments are kept so an
/// update can be verified and reversed exactly.
struct DualState {
  VectorXd mu;
  VectorXd prev_mu;
  VectorXd last_step;

  static DualState zero(const ExtendedProblem& ext);
};

// Named multiplier views into the flat vector.
double lambda_of(const ExtendedProblem& ext, const DualState& d, int cut);
VectorXd alpha_of(const ExtendedProblem& ext, const DualState& d);
VectorXd beta_of(const ExtendedProblem& ext, const DualState& d, int agent,
                 int scenario);
double gamma_of(const ExtendedProblem& ext, const DualState& d, int scenario);
/// Net v-consensus pressure on an agent: sum of outgoing minus incoming
/// arc multipliers, one value per consensus coordinate.
VectorXd delta_net(const ExtendedProblem& ext, const DualState& d, int agent);
/// Same aggregation for the per-scenario z-consensus multipliers.
VectorXd sigma_net(const ExtendedProblem& ext, const DualState& d, int agent,
                   int scenario);
/// Sum of the dynamics multipliers over agents for one scenario.
VectorXd beta_bar(const ExtendedProblem& ext, const DualState& d, int scenario);

struct SolverParams {
  double kappa = 0.3;       // augmentation penalty
  double tau = 0.0;         // primal step, must be in (0, 1/m)
  double tolerance = 1e-5;  // relative residual and step tolerance
  double dual_tolerance = 1e-5;
  int max_iterations = 20000;
  int cut_period = 25;      // iterations between cut generation attempts
  int max_cuts = 50;
  int workers = 0;          // 0: all hardware threads, 1: serial reference
  std::uint64_t seed = 0;   // reserved; the method itself is deterministic
  QpSettings qp;

  SolverParams();
  void validate(int agents) const;
};

struct FamilyResiduals {
  std::array<double, kFamilyCount> norm{};   // probability-weighted 2-norms
  std::array<double, kFamilyCount> scale{};  // constraint data norms
  VectorXd raw;                              // per-row residuals

  double max_relative() const;
};

/// Residuals of every coupling row at the given primal point.
FamilyResiduals residuals(const ExtendedProblem& ext, const PrimalState& state);

/// Plain Lagrange function value (objective plus weighted multiplier terms,
/// no augmentation) at the given point.
double lagrange_value(const ExtendedProblem& ext, const PrimalState& state,
                      const DualState& dual);

/// Linear cost of agent `i`'s local subproblem at the current iterate:
/// own objective, multiplier terms, and the cross terms of the quadratic
/// penalties with all other agents frozen.
VectorXd local_linear_term(const ExtendedProblem& ext, int agent,
                           const PrimalState& state, const DualState& dual,
                           double kappa);

/// Solves agent `i`'s local subproblem (augmented Lagrangian over the local
/// constraint set) at the given iterate and returns the minimizer block.
VectorXd local_step(const ExtendedProblem& ext, int agent,
                    const PrimalState& state, const DualState& dual,
                    const SolverParams& params);

/// Damped Jacobi update: per coordinate, state + tau * (target - state).
PrimalState primal_update(const PrimalState& state,
                          const std::vector<VectorXd>& targets, double tau);

/// Multiplier step kappa*tau times the row residual at the new primal
/// point, for every penalized coupling row.
DualState dual_update(const ExtendedProblem& ext, const DualState& dual,
                      const PrimalState& state, double kappa, double tau);

/// Recomputes the increments of the last update, verifies they match
/// bit-for-bit, and restores the prior multipliers.
DualState reverse_dual_update(const ExtendedProblem& ext, const DualState& dual,
                              const PrimalState& state, double kappa,
                              double tau);

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  std::array<double, kFamilyCount> residual{};
  VectorXd theta;
  double eta_spread = 0.0;
  double elapsed_ms = 0.0;
};

struct Trace {
  std::vector<IterationRecord> rows;
  void write_csv(std::ostream& os) const;
};

struct RunResult {
  bool converged = false;
  double objective = 0.0;  // extended objective at the final state
  PrimalState primal;
  DualState dual;
  Trace trace;
  int iterations = 0;
  ExtendedProblem problem;  // pool may have grown during the run
  FamilyResiduals final_residuals;
};

/// The decomposition loop: Jacobi local solves (parallel across agents),
/// damped primal averaging, multiplier updates, and periodic outer-measure
/// cuts at the incumbent risk profile. Deterministic for any worker count.
RunResult run(const ExtendedProblem& ext, const SolverParams& params);

struct CentralizedSolution {
  QpStatus status = QpStatus::MaxIterations;
  double objective = 0.0;
  std::vector<VectorXd> x;                // per agent
  std::vector<std::vector<VectorXd>> y;   // [agent][scenario]
  std::vector<VectorXd> z;                // per scenario, systemic block
  MatrixXd r;                             // agents x scenarios (zero if none)
  VectorXd theta;                         // inner risk values
  double outer_value = 0.0;               // outer measure of theta

  bool solved() const { return status == QpStatus::Solved; }
};

/// Monolithic reference solve: exact epigraph reformulations for the inner
/// measures and the outer measure, single systemic variable per scenario,
/// no consensus copies and no cuts.
CentralizedSolution solve_centralized(const TwoStageSystemProblem& problem,
                                      const QpSettings& settings = QpSettings());

}  // namespace sysrisk
