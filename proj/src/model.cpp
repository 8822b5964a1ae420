#include "sysrisk/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sysrisk {

LocalSet LocalSet::box(VectorXd lo, VectorXd hi) {
  LocalSet s;
  s.lower = std::move(lo);
  s.upper = std::move(hi);
  s.rows.resize(0, s.lower.size());
  s.row_lower.resize(0);
  s.row_upper.resize(0);
  s.validate();
  return s;
}

void LocalSet::validate() const {
  require(lower.size() == upper.size(), "local set bound size mismatch");
  for (int j = 0; j < lower.size(); ++j)
    require(lower[j] <= upper[j], "local set with lower > upper");
  require(rows.cols() == lower.size() || rows.size() == 0,
          "local set row width mismatch");
  require(rows.rows() == row_lower.size() && rows.rows() == row_upper.size(),
          "local set row bound mismatch");
}

bool TwoStageSystemProblem::homogeneous() const {
  if (coupling_rhs.size() > 0 && coupling_rhs.cwiseAbs().maxCoeff() > 0.0)
    return false;
  for (const auto& per_agent : second_stage)
    for (const auto& stage : per_agent)
      if (stage.offset.size() > 0 && stage.offset.cwiseAbs().maxCoeff() > 0.0)
        return false;
  return true;
}

void TwoStageSystemProblem::validate() const {
  require(agents >= 1, "problem needs at least one agent");
  require(scenarios >= 1, "problem needs at least one scenario");
  prob.validate();
  require(prob.size() == scenarios, "probability count mismatch");
  require(static_cast<int>(first_stage.size()) == agents,
          "first-stage block count mismatch");
  require(static_cast<int>(second_stage.size()) == agents,
          "second-stage block count mismatch");

  const int d1 = first_stage_rows();
  const int d2 = dynamics_rows();
  for (int i = 0; i < agents; ++i) {
    const auto& fs = first_stage[i];
    fs.set.validate();
    const int n1 = fs.set.dim();
    require(fs.cost.size() == n1, "first-stage cost size mismatch");
    require(fs.coupling.rows() == d1 && fs.coupling.cols() == n1,
            "first-stage coupling matrix shape mismatch");
    require(fs.cost.allFinite() && fs.coupling.allFinite(),
            "non-finite first-stage data");
    require(static_cast<int>(second_stage[i].size()) == scenarios,
            "scenario count mismatch in second stage");
    for (int s = 0; s < scenarios; ++s) {
      const auto& ss = second_stage[i][s];
      ss.set.validate();
      const int n2 = ss.set.dim();
      require(ss.cost.size() == n2, "second-stage cost size mismatch");
      require(ss.tech.rows() == d2 && ss.tech.cols() == n1,
              "technology matrix shape mismatch");
      require(ss.recourse.rows() == d2 && ss.recourse.cols() == n2,
              "recourse matrix shape mismatch");
      require(ss.offset.size() == d2, "dynamics offset size mismatch");
      require(ss.cost.allFinite() && ss.tech.allFinite() &&
                  ss.recourse.allFinite() && ss.offset.allFinite(),
              "non-finite second-stage data");
      const int k = ss.link_rows();
      require(ss.link_upper.size() == k, "linking row bound mismatch");
      require((k == 0 && ss.link_tech.size() == 0 &&
               ss.link_recourse.size() == 0) ||
                  (ss.link_tech.rows() == k && ss.link_tech.cols() == n1 &&
                   ss.link_recourse.rows() == k && ss.link_recourse.cols() == n2),
              "linking row shape mismatch");
    }
  }
  if (systemic_dim > 0) {
    require(static_cast<int>(systemic.size()) == scenarios,
            "systemic block count mismatch");
    for (const auto& sys : systemic) {
      sys.set.validate();
      require(sys.set.dim() == systemic_dim, "systemic set dimension mismatch");
      require(sys.coupling.rows() == d2 && sys.coupling.cols() == systemic_dim,
              "systemic coupling shape mismatch");
      require(sys.cost.size() == systemic_dim, "systemic cost size mismatch");
      require(sys.coupling.allFinite() && sys.cost.allFinite(),
              "non-finite systemic data");
    }
  } else {
    require(systemic.empty(), "systemic blocks present but dimension is zero");
  }
  risk.validate();
  require(risk.agents() == agents, "risk specification agent count mismatch");
}

HomogenizeResult homogenize(const TwoStageSystemProblem& problem) {
  problem.validate();
  const int m = problem.agents;
  const int N = problem.scenarios;
  const int d1 = problem.first_stage_rows();
  const int d2 = problem.dynamics_rows();
  const VectorXd& c = problem.risk.weights.c;

  const bool rhs_nonzero =
      d1 > 0 && problem.coupling_rhs.cwiseAbs().maxCoeff() > 0.0;

  // Shared part of the dynamics offsets (weighted across agents) and the
  // per-agent remainder.
  std::vector<VectorXd> shared(N, VectorXd::Zero(d2));
  bool any_offset = false, any_remainder = false;
  for (int s = 0; s < N; ++s) {
    for (int i = 0; i < m; ++i)
      shared[s] += c[i] * problem.second_stage[i][s].offset;
  }
  for (int i = 0; i < m && !(any_offset && any_remainder); ++i)
    for (int s = 0; s < N; ++s) {
      const VectorXd& h = problem.second_stage[i][s].offset;
      if (h.size() > 0 && h.cwiseAbs().maxCoeff() > 0.0) any_offset = true;
      if ((h - shared[s]).size() > 0 &&
          (h - shared[s]).cwiseAbs().maxCoeff() > 1e-14)
        any_remainder = true;
    }

  HomogenizeResult result;
  result.first_stage_extended = rhs_nonzero || any_remainder;
  result.second_stage_extended = any_offset;
  result.problem = problem;
  if (!result.first_stage_extended && !result.second_stage_extended)
    return result;

  TwoStageSystemProblem& out = result.problem;
  auto append_column = [](MatrixXd& M, const VectorXd& col) {
    M.conservativeResize(Eigen::NoChange, M.cols() + 1);
    M.col(M.cols() - 1) = col;
  };
  auto append_scalar = [](VectorXd& v, double value) {
    v.conservativeResize(v.size() + 1);
    v[v.size() - 1] = value;
  };

  for (int i = 0; i < m; ++i) {
    if (result.first_stage_extended) {
      auto& fs = out.first_stage[i];
      append_scalar(fs.cost, 0.0);
      append_scalar(fs.set.lower, 1.0);
      append_scalar(fs.set.upper, 1.0);
      if (fs.set.rows.rows() > 0)
        append_column(fs.set.rows, VectorXd::Zero(fs.set.rows.rows()));
      append_column(fs.coupling, d1 > 0
                                     ? VectorXd(-c[i] * problem.coupling_rhs)
                                     : VectorXd::Zero(0));
    }
    for (int s = 0; s < N; ++s) {
      auto& ss = out.second_stage[i][s];
      if (result.first_stage_extended) {
        append_column(ss.tech, -(problem.second_stage[i][s].offset - shared[s]));
        if (ss.link_rows() > 0)
          append_column(ss.link_tech, VectorXd::Zero(ss.link_rows()));
      }
      if (result.second_stage_extended) {
        append_scalar(ss.cost, 0.0);
        append_scalar(ss.set.lower, 1.0);
        append_scalar(ss.set.upper, 1.0);
        if (ss.set.rows.rows() > 0)
          append_column(ss.set.rows, VectorXd::Zero(ss.set.rows.rows()));
        if (ss.link_rows() > 0)
          append_column(ss.link_recourse, VectorXd::Zero(ss.link_rows()));
        append_column(ss.recourse, -c[i] * shared[s]);
        ss.offset.setZero();
      }
    }
  }
  if (result.first_stage_extended) out.coupling_rhs.setZero();
  out.validate();
  return result;
}

SpanningTree SpanningTree::path(int m) {
  SpanningTree t;
  t.nodes = m;
  for (int i = 0; i + 1 < m; ++i) t.arcs.emplace_back(i, i + 1);
  return t;
}

bool SpanningTree::valid() const {
  if (nodes < 1) return false;
  if (static_cast<int>(arcs.size()) != nodes - 1) return false;
  std::vector<int> parent(nodes);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (auto [i, j] : arcs) {
    if (i < 0 || j < 0 || i >= nodes || j >= nodes || i == j) return false;
    int ri = find(i), rj = find(j);
    if (ri == rj) return false;  // cycle
    parent[ri] = rj;
  }
  return true;  // m-1 acyclic arcs on m nodes are connected
}

void SpanningTree::validate() const {
  require(valid(), "arc list is not a spanning tree");
}

bool CutPool::add(const VectorXd& nu, double tol) {
  for (const VectorXd& existing : cuts)
    if (existing.size() == nu.size() &&
        (existing - nu).cwiseAbs().maxCoeff() <= tol)
      return false;
  cuts.push_back(nu);
  return true;
}

void CutPool::validate(const ScalarizationWeights& c) const {
  require(!cuts.empty(), "cut pool is empty");
  for (const VectorXd& nu : cuts) {
    require(nu.size() == c.size(), "cut dimension mismatch");
    require((nu.array() >= -1e-10).all(), "cut with negative density");
    require(std::abs(c.c.dot(nu) - 1.0) <= 1e-10, "cut density not normalized");
  }
}

VectorXd generate_cut(const VectorXd& theta, const RiskMeasureSpec& outer,
                      const ScalarizationWeights& c) {
  require(theta.allFinite(), "risk profile must be finite");
  require(theta.size() == c.size(), "risk profile dimension mismatch");
  return subgradient(outer, DiscreteRandomVariable(theta, c.as_prob()));
}

double systemic_share_upper(const SystemicStage& stage) {
  double worst = 0.0;
  for (int j = 0; j < stage.cost.size(); ++j)
    worst += stage.cost[j] >= 0 ? stage.cost[j] * stage.set.upper[j]
                                : stage.cost[j] * stage.set.lower[j];
  return std::max(0.0, worst);
}

const char* to_string(Family family) {
  switch (family) {
    case Family::Cuts: return "cuts";
    case Family::FirstStage: return "first_stage";
    case Family::Dynamics: return "dynamics";
    case Family::SysCost: return "systemic_cost";
    case Family::ConsensusV: return "consensus_v";
    case Family::ConsensusZ: return "consensus_z";
  }
  return "unknown";
}

int CouplingRow::touched_agents() const {
  std::vector<int> seen;
  for (const auto& t : terms)
    if (std::find(seen.begin(), seen.end(), t.agent) == seen.end())
      seen.push_back(t.agent);
  return static_cast<int>(seen.size());
}

int ExtendedProblem::dynamics_row(int i, int s, int r) const {
  const int d2 = base.dynamics_rows();
  return span(Family::Dynamics).begin + (i * base.scenarios + s) * d2 + r;
}

int ExtendedProblem::total_vars() const {
  int n = 0;
  for (const auto& l : layout) n += l.size();
  return n;
}

int ExtendedProblem::agent_offset(int i) const {
  int off = 0;
  for (int a = 0; a < i; ++a) off += layout[a].size();
  return off;
}

double ExtendedProblem::objective_value(
    const std::vector<VectorXd>& blocks) const {
  double value = 0.0;
  for (int i = 0; i < base.agents; ++i)
    value += agent[i].objective.dot(blocks[i]) + agent[i].objective_offset;
  return value;
}

ExtendedProblem build_extended(const TwoStageSystemProblem& problem,
                               const SpanningTree& tree,
                               const std::vector<SpanningTree>& scenario_trees,
                               const CutPool& pool) {
  problem.validate();
  tree.validate();
  require(tree.nodes == problem.agents, "tree node count mismatch");
  require(static_cast<int>(scenario_trees.size()) == problem.scenarios,
          "need one scenario tree per scenario");
  for (const auto& st : scenario_trees) {
    st.validate();
    require(st.nodes == problem.agents, "scenario tree node count mismatch");
  }
  pool.validate(problem.risk.weights);

  const int m = problem.agents;
  const int N = problem.scenarios;
  const int d1 = problem.first_stage_rows();
  const int d2 = problem.dynamics_rows();
  const int d3 = problem.systemic_dim;
  const int L = pool.size();
  const VectorXd& c = problem.risk.weights.c;

  ExtendedProblem ext;
  ext.base = problem;
  ext.tree = tree;
  ext.scenario_trees = scenario_trees;
  ext.pool = pool;
  ext.layout.resize(m);
  ext.agent.resize(m);

  // Upper bound on the per-scenario systemic cost share, used to keep the
  // allocation variables in a compact box.
  VectorXd r_upper = VectorXd::Zero(N);
  for (int s = 0; s < N && d3 > 0; ++s)
    r_upper[s] = systemic_share_upper(problem.systemic[s]);

  for (int i = 0; i < m; ++i) {
    const auto& fs = problem.first_stage[i];
    AgentLayout& lay = ext.layout[i];
    lay.n1 = fs.set.dim();
    lay.n2 = problem.second_stage[i][0].set.dim();
    lay.d3 = d3;
    lay.scenarios = N;
    lay.cuts = L;
    EpigraphTemplate tmpl = epigraph_reformulation(problem.risk.inner[i]);
    lay.aux = tmpl.aux_count(N);

    auto& blk = ext.agent[i];
    const int width = lay.size();
    blk.var_lower = VectorXd::Constant(width, -kInf);
    blk.var_upper = VectorXd::Constant(width, kInf);
    blk.objective = VectorXd::Zero(width);
    blk.objective_offset = fs.cost_offset;

    for (int j = 0; j < lay.n1; ++j) {
      blk.var_lower[lay.x_col(j)] = fs.set.lower[j];
      blk.var_upper[lay.x_col(j)] = fs.set.upper[j];
      blk.objective[lay.x_col(j)] = fs.cost[j];
    }
    blk.objective[lay.eta_col()] = c[i];
    for (int l = 0; l < L; ++l) blk.var_lower[lay.w_col(l)] = 0.0;
    for (int s = 0; s < N; ++s) {
      const auto& ss = problem.second_stage[i][s];
      for (int j = 0; j < lay.n2; ++j) {
        blk.var_lower[lay.y_col(s, j)] = ss.set.lower[j];
        blk.var_upper[lay.y_col(s, j)] = ss.set.upper[j];
      }
      for (int j = 0; j < d3; ++j) {
        blk.var_lower[lay.z_col(s, j)] = problem.systemic[s].set.lower[j];
        blk.var_upper[lay.z_col(s, j)] = problem.systemic[s].set.upper[j];
      }
      if (d3 > 0) {
        blk.var_lower[lay.r_col(s)] = 0.0;
        blk.var_upper[lay.r_col(s)] = r_upper[s];
      }
    }
    VectorXd aux_lo, aux_hi;
    tmpl.aux_bounds(N, aux_lo, aux_hi);
    for (int j = 0; j < lay.aux; ++j) {
      blk.var_lower[lay.aux_col(j)] = aux_lo[j];
      blk.var_upper[lay.aux_col(j)] = aux_hi[j];
    }

    // Hard local rows: polyhedral parts of the local sets plus the risk
    // epigraph of the realized second-stage cost.
    RowBlockBuilder rows(width);
    for (int r = 0; r < fs.set.rows.rows(); ++r) {
      int row = rows.begin_row(fs.set.row_lower[r], fs.set.row_upper[r]);
      for (int j = 0; j < lay.n1; ++j)
        rows.coeff(row, lay.x_col(j), fs.set.rows(r, j));
    }
    for (int s = 0; s < N; ++s) {
      const auto& ss = problem.second_stage[i][s];
      for (int r = 0; r < ss.set.rows.rows(); ++r) {
        int row = rows.begin_row(ss.set.row_lower[r], ss.set.row_upper[r]);
        for (int j = 0; j < lay.n2; ++j)
          rows.coeff(row, lay.y_col(s, j), ss.set.rows(r, j));
      }
      for (int r = 0; r < ss.link_rows(); ++r) {
        int row = rows.begin_row(ss.link_lower[r], ss.link_upper[r]);
        for (int j = 0; j < lay.n1; ++j)
          rows.coeff(row, lay.x_col(j), ss.link_tech(r, j));
        for (int j = 0; j < lay.n2; ++j)
          rows.coeff(row, lay.y_col(s, j), ss.link_recourse(r, j));
      }
    }
    std::vector<LinearExpr> scenario_cost(N);
    for (int s = 0; s < N; ++s) {
      const auto& ss = problem.second_stage[i][s];
      for (int j = 0; j < lay.n2; ++j)
        scenario_cost[s].add(lay.y_col(s, j), ss.cost[j]);
      if (d3 > 0) scenario_cost[s].add(lay.r_col(s), 1.0);
    }
    tmpl.instantiate(problem.prob, scenario_cost, lay.theta_col(),
                     lay.aux > 0 ? lay.aux_col(0) : 0, rows);
    blk.local_rows = rows.matrix();
    blk.local_lower = rows.lower();
    blk.local_upper = rows.upper();
  }

  // Coupling rows, family-major.
  auto push_family = [&](Family f, auto&& emit) {
    FamilySpan& span = ext.families[static_cast<int>(f)];
    span.begin = static_cast<int>(ext.coupling.size());
    emit();
    span.size = static_cast<int>(ext.coupling.size()) - span.begin;
  };

  push_family(Family::Cuts, [&] {
    for (int l = 0; l < L; ++l) {
      CouplingRow row{Family::Cuts, 1.0, 0.0, {}, {}};
      for (int i = 0; i < m; ++i) {
        row.terms.push_back({i, ext.layout[i].theta_col(), c[i] * pool.cuts[l][i]});
        row.terms.push_back({i, ext.layout[i].w_col(l), c[i]});
        row.terms.push_back({i, ext.layout[i].eta_col(), -c[i]});
      }
      // Each agent penalizes its own copy of the slack and the bound.
      for (int i = 0; i < m; ++i) {
        CouplingRow::View view;
        view.agent = i;
        view.own.push_back({i, ext.layout[i].theta_col(), c[i] * pool.cuts[l][i]});
        view.own.push_back({i, ext.layout[i].w_col(l), 1.0});
        view.own.push_back({i, ext.layout[i].eta_col(), -1.0});
        for (int k = 0; k < m; ++k)
          if (k != i)
            view.others.push_back(
                {k, ext.layout[k].theta_col(), c[k] * pool.cuts[l][k]});
        row.views.push_back(std::move(view));
      }
      ext.coupling.push_back(std::move(row));
    }
  });
  push_family(Family::FirstStage, [&] {
    for (int r = 0; r < d1; ++r) {
      CouplingRow row{Family::FirstStage, 1.0, problem.coupling_rhs[r], {}};
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < ext.layout[i].n1; ++j)
          if (problem.first_stage[i].coupling(r, j) != 0.0)
            row.terms.push_back({i, ext.layout[i].x_col(j),
                                 problem.first_stage[i].coupling(r, j)});
      ext.coupling.push_back(std::move(row));
    }
  });
  push_family(Family::Dynamics, [&] {
    for (int i = 0; i < m; ++i)
      for (int s = 0; s < N; ++s)
        for (int r = 0; r < d2; ++r) {
          const auto& own = problem.second_stage[i][s];
          CouplingRow row{Family::Dynamics, problem.prob[s], own.offset[r], {}};
          for (int j = 0; j < ext.layout[i].n1; ++j)
            if (own.tech(r, j) != 0.0)
              row.terms.push_back({i, ext.layout[i].x_col(j), own.tech(r, j)});
          for (int a = 0; a < m; ++a) {
            const auto& other = problem.second_stage[a][s];
            for (int j = 0; j < ext.layout[a].n2; ++j)
              if (other.recourse(r, j) != 0.0)
                row.terms.push_back(
                    {a, ext.layout[a].y_col(s, j), other.recourse(r, j)});
          }
          for (int j = 0; j < d3; ++j)
            if (problem.systemic[s].coupling(r, j) != 0.0)
              row.terms.push_back({i, ext.layout[i].z_col(s, j),
                                   problem.systemic[s].coupling(r, j)});
          ext.coupling.push_back(std::move(row));
        }
  });
  push_family(Family::SysCost, [&] {
    for (int s = 0; s < N && d3 > 0; ++s) {
      CouplingRow row{Family::SysCost, problem.prob[s], 0.0, {}, {}};
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d3; ++j)
          if (problem.systemic[s].cost[j] != 0.0)
            row.terms.push_back({i, ext.layout[i].z_col(s, j),
                                 c[i] * problem.systemic[s].cost[j]});
        row.terms.push_back({i, ext.layout[i].r_col(s), -1.0});
      }
      // Per-agent view: own full systemic cost on the own copy against
      // everyone's allocation shares.
      for (int i = 0; i < m; ++i) {
        CouplingRow::View view;
        view.agent = i;
        for (int j = 0; j < d3; ++j)
          if (problem.systemic[s].cost[j] != 0.0)
            view.own.push_back(
                {i, ext.layout[i].z_col(s, j), problem.systemic[s].cost[j]});
        view.own.push_back({i, ext.layout[i].r_col(s), -1.0});
        for (int k = 0; k < m; ++k)
          if (k != i) view.others.push_back({k, ext.layout[k].r_col(s), -1.0});
        row.views.push_back(std::move(view));
      }
      ext.coupling.push_back(std::move(row));
    }
  });
  push_family(Family::ConsensusV, [&] {
    for (auto [i, j] : tree.arcs)
      for (int l = 0; l <= L; ++l) {
        CouplingRow row{Family::ConsensusV, 1.0, 0.0, {}};
        row.terms.push_back({i, ext.layout[i].v_col(l), 1.0});
        row.terms.push_back({j, ext.layout[j].v_col(l), -1.0});
        ext.coupling.push_back(std::move(row));
      }
  });
  push_family(Family::ConsensusZ, [&] {
    for (int s = 0; s < N && d3 > 0; ++s)
      for (auto [i, j] : scenario_trees[s].arcs)
        for (int k = 0; k < d3; ++k) {
          CouplingRow row{Family::ConsensusZ, problem.prob[s], 0.0, {}};
          row.terms.push_back({i, ext.layout[i].z_col(s, k), 1.0});
          row.terms.push_back({j, ext.layout[j].z_col(s, k), -1.0});
          ext.coupling.push_back(std::move(row));
        }
  });

  return ext;
}

ExtendedProblem build_extended(const TwoStageSystemProblem& problem) {
  SpanningTree tree = SpanningTree::path(problem.agents);
  std::vector<SpanningTree> scenario_trees(problem.scenarios, tree);
  return build_extended(problem, tree, scenario_trees,
                        CutPool::initial(problem.agents));
}

ExtendedProblem with_added_cut(const ExtendedProblem& ext, const VectorXd& nu) {
  CutPool pool = ext.pool;
  pool.add(nu);
  return build_extended(ext.base, ext.tree, ext.scenario_trees, pool);
}

std::string ValidationReport::summary() const {
  if (ok) return "pass";
  std::ostringstream os;
  os << "fail (" << issues.size() << " issue" << (issues.size() == 1 ? "" : "s")
     << ")";
  for (const auto& what : issues) os << "\n  - " << what;
  return os.str();
}

ValidationReport validate(const ExtendedProblem& ext) {
  ValidationReport report;
  try {
    ext.base.validate();
  } catch (const InvalidInput& e) {
    report.fail(std::string("base problem: ") + e.what());
  }
  if (!ext.tree.valid() || ext.tree.nodes != ext.base.agents)
    report.fail("disconnected consensus graph: arc list is not a spanning tree "
                "over the agents");
  if (static_cast<int>(ext.scenario_trees.size()) != ext.base.scenarios)
    report.fail("scenario tree count mismatch");
  for (std::size_t s = 0; s < ext.scenario_trees.size(); ++s)
    if (!ext.scenario_trees[s].valid() ||
        ext.scenario_trees[s].nodes != ext.base.agents)
      report.fail("disconnected consensus graph in scenario " +
                  std::to_string(s));
  try {
    ext.pool.validate(ext.base.risk.weights);
  } catch (const InvalidInput& e) {
    report.fail(std::string("cut pool: ") + e.what());
  }
  for (int i = 0; i < ext.base.agents; ++i) {
    if (!ext.base.first_stage[i].set.bounded())
      report.fail("unbounded first-stage set for agent " + std::to_string(i) +
                  " violates the compactness requirement of the decomposition");
    for (int s = 0; s < ext.base.scenarios; ++s)
      if (!ext.base.second_stage[i][s].set.bounded())
        report.fail("unbounded second-stage set for agent " +
                    std::to_string(i) + ", scenario " + std::to_string(s) +
                    " violates the compactness requirement of the decomposition");
  }
  if (ext.base.systemic_dim > 0) {
    for (int s = 0; s < ext.base.scenarios; ++s)
      if (!ext.base.systemic[s].set.bounded())
        report.fail("unbounded systemic set in scenario " + std::to_string(s) +
                    " violates the compactness requirement of the decomposition");
  }
  return report;
}

QpProblem assemble_extended_qp(const ExtendedProblem& ext) {
  const int m = ext.base.agents;
  const int n = ext.total_vars();
  RowBlockBuilder rows(n);

  for (int i = 0; i < m; ++i) {
    const auto& blk = ext.agent[i];
    const int off = ext.agent_offset(i);
    for (int j = 0; j < blk.var_lower.size(); ++j) {
      if (blk.var_lower[j] == -kInf && blk.var_upper[j] == kInf) continue;
      int r = rows.begin_row(blk.var_lower[j], blk.var_upper[j]);
      rows.coeff(r, off + j, 1.0);
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> lr(blk.local_rows);
    for (int r = 0; r < lr.rows(); ++r) {
      int row = rows.begin_row(blk.local_lower[r], blk.local_upper[r]);
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(lr, r);
           it; ++it)
        rows.coeff(row, off + it.col(), it.value());
    }
  }
  for (const CouplingRow& row : ext.coupling) {
    int r = rows.begin_row(row.rhs, row.rhs);
    for (const auto& t : row.terms)
      rows.coeff(r, ext.agent_offset(t.agent) + t.col, t.coeff);
  }

  QpProblem qp;
  qp.P.resize(n, n);
  qp.q = VectorXd::Zero(n);
  for (int i = 0; i < m; ++i)
    qp.q.segment(ext.agent_offset(i), ext.layout[i].size()) =
        ext.agent[i].objective;
  qp.A = rows.matrix();
  qp.lower = rows.lower();
  qp.upper = rows.upper();
  return qp;
}

}  // namespace sysrisk
