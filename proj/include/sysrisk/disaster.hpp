#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sysrisk/model.hpp"
#include "sysrisk/solver.hpp"

namespace sysrisk {

/// Facility locations on the unit square with shipping arcs and the cost
/// data of the relief problem.
struct FacilityNetwork {
  MatrixXd coordinates;                    // m x 2
  std::vector<std::vector<int>> neighbors; // outgoing arcs per facility
  VectorXd prealloc_cost;                  // per-unit positioning cost
  VectorXd salvage_cost;                   // per-unit cost of unused stock
  VectorXd shortage_cost;                  // per-unit shortage penalty
  MatrixXd ship_cost;                      // m x m, neighbor entries used
  MatrixXd capacity;                       // m x m arc capacities
  VectorXd usable_fraction;                // share of stock usable, in [0,1]
  double budget = 0.0;

  int facilities() const { return static_cast<int>(coordinates.rows()); }
  int arc_count() const;
  void validate() const;
};

/// Five facilities at fixed coordinates, complete shipping graph, and the
/// benchmark cost values (documented in the README).
FacilityNetwork default_network();

struct DisasterInstance {
  FacilityNetwork network;
  std::uint64_t seed = 0;
  int scenarios = 0;
  double nu1 = 20.0;  // demand scale
  double nu2 = 2.0;   // demand decay
  MatrixXd epicenters;  // N x 2
  MatrixXd demand;      // m x N
  ProbabilityVector prob;
  double kappa0 = 0.5;          // outer semideviation weight
  VectorXd kappa_inner;         // per-facility inner weights
  ScalarizationWeights weights;

  void validate() const;
};

/// Seeded instance: epicenters drawn uniformly on the unit square, demand
/// nu1 / (1 + exp(nu2 * distance)). Identical output for identical seeds.
DisasterInstance generate_instance(std::uint64_t seed, int scenarios,
                                   double nu1 = 20.0, double nu2 = 2.0,
                                   FacilityNetwork network = default_network());

enum class Aggregation { Expectation, Semideviation, LinearScalarization };
const char* to_string(Aggregation aggregation);
Aggregation aggregation_from_string(const std::string& name);

/// The relief problem written out directly as one LP, with the column and
/// row offsets needed to read solutions and multipliers back.
struct DirectModel {
  QpProblem qp;
  Aggregation aggregation = Aggregation::Semideviation;
  std::vector<std::pair<int, int>> arcs;  // directed, fixed order

  int alloc0 = 0;      // r_i
  int flow0 = 0;       // x_a^s at flow0 + s*arcs + a
  int surplus0 = 0;    // u_i^s at surplus0 + s*m + i
  int shortage0 = 0;   // z_i^s
  int shortfall0 = 0;  // v_i^s (risk shortfalls)
  int theta0 = 0;      // theta_i
  int fair0 = -1;      // fairness gaps (semideviation only)
  int total0 = -1;     // scalarized risk block (linear scalarization only)

  int balance_row0 = 0;  // at balance_row0 + s*m + i
  int budget_row = 0;
  int fairness_row0 = -1;

  int vars() const { return qp.vars(); }
};

DirectModel formulate_direct(const DisasterInstance& instance,
                             Aggregation aggregation);

struct DisasterSolution {
  QpStatus status = QpStatus::MaxIterations;
  bool converged = false;
  double objective = 0.0;
  VectorXd allocation;          // r
  std::vector<MatrixXd> flows;  // per scenario, m x m
  MatrixXd surplus;             // m x N
  MatrixXd shortage;            // m x N
  VectorXd theta;               // per-facility risk, recomputed from flows
  double total_risk = 0.0;      // the mode's aggregate of theta
  double rho_c = 0.0;           // scalarized risk at the solution
  int iterations = 0;
};

/// Solves the direct LP centrally.
DisasterSolution solve_direct(const DisasterInstance& instance,
                              Aggregation aggregation,
                              const QpSettings& settings = QpSettings());

/// The instance as a generic two-stage system problem (inner measures
/// semideviation with the instance weights, outer per aggregation; the
/// scalarized mode has no profile form and is rejected).
TwoStageSystemProblem to_two_stage(const DisasterInstance& instance,
                                   Aggregation aggregation);

/// Reads a disaster solution out of a primal state of the extended problem
/// built from to_two_stage (risks recomputed from the flows).
DisasterSolution solution_from_two_stage(const DisasterInstance& instance,
                                         Aggregation aggregation,
                                         const ExtendedProblem& ext,
                                         const PrimalState& state);
DisasterSolution solution_from_centralized(const DisasterInstance& instance,
                                           Aggregation aggregation,
                                           const CentralizedSolution& sol);

/// Multipliers of the relaxed coupling constraints of the direct model.
struct RelaxationMultipliers {
  double budget = 0.0;  // alpha >= 0
  VectorXd fairness;    // beta_i >= 0, empty in expectation mode
  MatrixXd flow;        // delta_i^s, m x N
};

/// Extracts the relaxation multipliers from a solved direct model.
RelaxationMultipliers multipliers_from_direct(const DirectModel& model,
                                              const QpResult& result);

/// Value of location i's relaxed subproblem at the given multipliers; the
/// sum over locations underestimates the direct optimum.
double local_relaxed_subproblem(int location,
                                const RelaxationMultipliers& multipliers,
                                const DisasterInstance& instance,
                                Aggregation aggregation,
                                const QpSettings& settings = QpSettings());

struct ReportTables {
  std::string risk_csv;
  std::string allocation_csv;
  std::string text;
};

/// Risk and allocation tables over the solved aggregation modes.
ReportTables report(const DisasterInstance& instance,
                    const std::vector<std::pair<Aggregation, DisasterSolution>>&
                        solutions);

}  // namespace sysrisk
