#pragma once

#include <string>
#include <vector>

#include "sysrisk/qp.hpp"
#include "sysrisk/systemic.hpp"

namespace sysrisk {

/// Box plus optional linear rows:  lower <= x <= upper,
/// row_lower <= rows * x <= row_upper.
struct LocalSet {
  VectorXd lower, upper;
  MatrixXd rows;  // 0 x dim when absent
  VectorXd row_lower, row_upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool bounded() const {
    return lower.allFinite() && upper.allFinite();
  }
  static LocalSet box(VectorXd lo, VectorXd hi);
  void validate() const;
};

struct AgentFirstStage {
  VectorXd cost;        // affine cost  cost . x + cost_offset
  double cost_offset = 0.0;
  LocalSet set;
  MatrixXd coupling;    // d1 x n1
};

struct AgentSecondStage {
  VectorXd cost;     // scenario cost vector
  MatrixXd tech;     // d2 x n1, multiplies the agent's first-stage decision
  MatrixXd recourse; // d2 x n2
  VectorXd offset;   // d2 right-hand side of the dynamics block
  LocalSet set;
  // Agent-private rows over (x_i, y_i^s) jointly, e.g. stock usability.
  // They stay local under the decomposition.
  MatrixXd link_tech;     // k x n1
  MatrixXd link_recourse; // k x n2
  VectorXd link_lower, link_upper;  // k

  int link_rows() const { return static_cast<int>(link_lower.size()); }
};

/// Shared systemic block of one scenario (absent when systemic_dim == 0).
struct SystemicStage {
  MatrixXd coupling;  // d2 x d3
  VectorXd cost;      // d3
  LocalSet set;       // box on the systemic variable
};

/// Risk-averse two-stage problem over a network of agents.
struct TwoStageSystemProblem {
  int agents = 0;
  int scenarios = 0;
  ProbabilityVector prob;
  VectorXd coupling_rhs;  // d1, right-hand side of the first-stage coupling
  std::vector<AgentFirstStage> first_stage;                // m
  std::vector<std::vector<AgentSecondStage>> second_stage; // m x N
  std::vector<SystemicStage> systemic;                     // N, empty if d3 == 0
  int systemic_dim = 0;
  SystemicMeasureSpec risk;

  int first_stage_rows() const { return static_cast<int>(coupling_rhs.size()); }
  int dynamics_rows() const {
    return second_stage.empty() || second_stage[0].empty()
               ? 0
               : static_cast<int>(second_stage[0][0].tech.rows());
  }
  bool homogeneous() const;
  void validate() const;
};

struct HomogenizeResult {
  TwoStageSystemProblem problem;
  bool first_stage_extended = false;   // constant column appended to x
  bool second_stage_extended = false;  // constant column appended to y
};

/// Equivalent problem with zero first-stage right-hand side and zero
/// dynamics offsets, obtained by appending components fixed to one.
/// The shared part of the offsets moves into the recourse matrices
/// (split by the scalarization weights); any per-agent remainder moves
/// into the technology matrices through the first-stage constant.
HomogenizeResult homogenize(const TwoStageSystemProblem& problem);

/// Spanning tree over the agents, given as a list of arcs.
struct SpanningTree {
  int nodes = 0;
  std::vector<std::pair<int, int>> arcs;

  static SpanningTree path(int m);
  bool valid() const;
  void validate() const;
  int size() const { return static_cast<int>(arcs.size()); }
};

/// Finite outer-measure approximation: each element is a density on the
/// weighted component space.
struct CutPool {
  std::vector<VectorXd> cuts;

  static CutPool initial(int m) {
    CutPool pool;
    pool.cuts.push_back(VectorXd::Ones(m));
    return pool;
  }
  int size() const { return static_cast<int>(cuts.size()); }
  /// Appends unless an existing cut matches within tol; returns true if added.
  bool add(const VectorXd& nu, double tol = 1e-9);
  void validate(const ScalarizationWeights& c) const;
};

/// Subgradient of the outer measure at the given risk profile; the returned
/// density supports the outer measure exactly at theta.
VectorXd generate_cut(const VectorXd& theta, const RiskMeasureSpec& outer,
                      const ScalarizationWeights& c);

/// Largest systemic cost reachable over the scenario's box, clipped at
/// zero; bounds the per-agent allocation shares.
double systemic_share_upper(const SystemicStage& stage);

enum class Family : int {
  Cuts = 0,
  FirstStage = 1,
  Dynamics = 2,
  SysCost = 3,
  ConsensusV = 4,
  ConsensusZ = 5,
};
constexpr int kFamilyCount = 6;
const char* to_string(Family family);

struct CouplingTerm {
  int agent;
  int col;  // within the agent's variable block
  double coeff;
};

/// One scalar coupling constraint  sum of terms == rhs, with the scenario
/// probability attached where the formulation weights by it.
///
/// Rows that aggregate per-agent copies of one scalar quantity (the cut
/// rows and the systemic cost balance) carry per-agent penalty views: in
/// its local subproblem an agent penalizes its own full copy of the
/// constraint, with the other agents entering only through their frozen
/// profile terms. At consensus a view's residual equals the row residual,
/// so the fixed point is unchanged while the local curvature on the
/// copied variables stays at full strength. Multiplier updates always use
/// the true row residual.
struct CouplingRow {
  Family family;
  double weight = 1.0;
  double rhs = 0.0;
  std::vector<CouplingTerm> terms;

  struct View {
    int agent;
    std::vector<CouplingTerm> own;     // this agent's columns
    std::vector<CouplingTerm> others;  // frozen at the current iterate
  };
  std::vector<View> views;  // empty: penalty follows the true term split

  int touched_agents() const;
};

/// Column layout of one agent's variable block:
/// [ x | theta | eta | w_1..w_L | y(0..N-1) | z(0..N-1) | r(0..N-1) | aux ].
struct AgentLayout {
  int n1 = 0, n2 = 0, d3 = 0;
  int scenarios = 0, cuts = 0;
  int aux = 0;  // inner epigraph auxiliaries

  int x_col(int j) const { return j; }
  int theta_col() const { return n1; }
  int eta_col() const { return n1 + 1; }
  int w_col(int l) const { return n1 + 2 + l; }
  int y_col(int s, int j) const { return n1 + 2 + cuts + s * n2 + j; }
  int z_col(int s, int j) const {
    return n1 + 2 + cuts + scenarios * n2 + s * d3 + j;
  }
  int r_col(int s) const {
    return n1 + 2 + cuts + scenarios * (n2 + d3) + s;
  }
  int aux_col(int j) const {
    return n1 + 2 + cuts + scenarios * (n2 + d3) + (d3 > 0 ? scenarios : 0) + j;
  }
  int size() const {
    return n1 + 2 + cuts + scenarios * (n2 + d3) + (d3 > 0 ? scenarios : 0) + aux;
  }
  /// Consensus stack coordinate l in [0, cuts]: eta first, then the w's.
  int v_col(int l) const { return l == 0 ? eta_col() : w_col(l - 1); }
};

struct FamilySpan {
  int begin = 0;
  int size = 0;
};

/// Consensus + cutting-plane form of the two-stage problem: per-agent
/// variable blocks with local constraints, plus the tagged coupling rows.
struct ExtendedProblem {
  TwoStageSystemProblem base;
  SpanningTree tree;
  std::vector<SpanningTree> scenario_trees;
  CutPool pool;

  std::vector<AgentLayout> layout;

  // Per-agent local data (bounds, hard rows, objective).
  struct AgentBlock {
    VectorXd var_lower, var_upper;
    SparseMatrix local_rows;
    VectorXd local_lower, local_upper;
    VectorXd objective;  // linear; the eta weight and first-stage cost
    double objective_offset = 0.0;
  };
  std::vector<AgentBlock> agent;

  std::vector<CouplingRow> coupling;  // family-major, fixed order
  FamilySpan families[kFamilyCount];

  FamilySpan span(Family f) const { return families[static_cast<int>(f)]; }
  int coupling_rows() const { return static_cast<int>(coupling.size()); }
  int dynamics_row(int i, int s, int r) const;
  int total_vars() const;
  int agent_offset(int i) const;

  /// Objective value of a full primal assignment (one block per agent).
  double objective_value(const std::vector<VectorXd>& blocks) const;
};

ExtendedProblem build_extended(const TwoStageSystemProblem& problem,
                               const SpanningTree& tree,
                               const std::vector<SpanningTree>& scenario_trees,
                               const CutPool& pool);

/// Convenience overload: path trees everywhere, expectation-element pool.
ExtendedProblem build_extended(const TwoStageSystemProblem& problem);

/// Same extended problem with one more cut appended to the pool.
ExtendedProblem with_added_cut(const ExtendedProblem& ext, const VectorXd& nu);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> issues;

  void fail(std::string what) {
    ok = false;
    issues.push_back(std::move(what));
  }
  std::string summary() const;
};

ValidationReport validate(const ExtendedProblem& ext);

/// Assembles the whole extended problem as one QP (all families hard).
QpProblem assemble_extended_qp(const ExtendedProblem& ext);

}  // namespace sysrisk
