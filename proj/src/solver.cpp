#include "sysrisk/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sysrisk {

namespace {

// Rows touching at most one agent are enforced inside that agent's local
// subproblem instead of being penalized; with a single agent this makes the
// local solve exact.
bool penalized(const CouplingRow& row) { return row.touched_agents() >= 2; }

int single_owner(const CouplingRow& row) {
  return row.terms.empty() ? -1 : row.terms.front().agent;
}

VectorXd coupling_row_totals(const ExtendedProblem& ext,
                             const std::vector<VectorXd>& blocks) {
  VectorXd total = VectorXd::Zero(ext.coupling_rows());
  for (int r = 0; r < ext.coupling_rows(); ++r)
    for (const auto& t : ext.coupling[r].terms)
      total[r] += t.coeff * blocks[t.agent][t.col];
  return total;
}

}  // namespace

VectorXd PrimalState::theta(const ExtendedProblem& ext) const {
  VectorXd out(agents());
  for (int i = 0; i < agents(); ++i) out[i] = blocks[i][ext.layout[i].theta_col()];
  return out;
}

VectorXd PrimalState::eta(const ExtendedProblem& ext) const {
  VectorXd out(agents());
  for (int i = 0; i < agents(); ++i) out[i] = blocks[i][ext.layout[i].eta_col()];
  return out;
}

double PrimalState::eta_spread(const ExtendedProblem& ext) const {
  VectorXd e = eta(ext);
  return e.maxCoeff() - e.minCoeff();
}

DualState DualState::zero(const ExtendedProblem& ext) {
  DualState d;
  d.mu = VectorXd::Zero(ext.coupling_rows());
  d.prev_mu = d.mu;
  d.last_step = d.mu;
  return d;
}

double lambda_of(const ExtendedProblem& ext, const DualState& d, int cut) {
  return d.mu[ext.span(Family::Cuts).begin + cut];
}

VectorXd alpha_of(const ExtendedProblem& ext, const DualState& d) {
  auto s = ext.span(Family::FirstStage);
  return d.mu.segment(s.begin, s.size);
}

VectorXd beta_of(const ExtendedProblem& ext, const DualState& d, int agent,
                 int scenario) {
  const int d2 = ext.base.dynamics_rows();
  return d.mu.segment(ext.dynamics_row(agent, scenario, 0), d2);
}

double gamma_of(const ExtendedProblem& ext, const DualState& d, int scenario) {
  return d.mu[ext.span(Family::SysCost).begin + scenario];
}

VectorXd delta_net(const ExtendedProblem& ext, const DualState& d, int agent) {
  const int coords = 1 + ext.pool.size();
  VectorXd net = VectorXd::Zero(coords);
  const int base = ext.span(Family::ConsensusV).begin;
  for (std::size_t a = 0; a < ext.tree.arcs.size(); ++a) {
    auto [i, j] = ext.tree.arcs[a];
    for (int l = 0; l < coords; ++l) {
      double mu = d.mu[base + static_cast<int>(a) * coords + l];
      if (i == agent) net[l] += mu;
      if (j == agent) net[l] -= mu;
    }
  }
  return net;
}

VectorXd sigma_net(const ExtendedProblem& ext, const DualState& d, int agent,
                   int scenario) {
  const int d3 = ext.base.systemic_dim;
  VectorXd net = VectorXd::Zero(d3);
  if (d3 == 0) return net;
  const int arcs = ext.base.agents - 1;
  const int base = ext.span(Family::ConsensusZ).begin;
  for (int a = 0; a < arcs; ++a) {
    auto [i, j] = ext.scenario_trees[scenario].arcs[a];
    for (int k = 0; k < d3; ++k) {
      double mu = d.mu[base + (scenario * arcs + a) * d3 + k];
      if (i == agent) net[k] += mu;
      if (j == agent) net[k] -= mu;
    }
  }
  return net;
}

VectorXd beta_bar(const ExtendedProblem& ext, const DualState& d, int scenario) {
  const int d2 = ext.base.dynamics_rows();
  VectorXd bar = VectorXd::Zero(d2);
  for (int i = 0; i < ext.base.agents; ++i)
    bar += beta_of(ext, d, i, scenario);
  return bar;
}

SolverParams::SolverParams() {
  qp.eps_abs = 1e-8;
  qp.eps_rel = 1e-8;
  qp.max_iterations = 100000;
}

void SolverParams::validate(int agents) const {
  require(kappa > 0.0, "penalty parameter must be positive");
  require(tau > 0.0 && tau < 1.0 / agents,
          "primal step must lie in (0, 1/m) for m agents");
  require(tolerance > 0.0 && dual_tolerance > 0.0, "tolerances must be positive");
  require(max_iterations >= 1, "iteration cap must be positive");
  require(cut_period >= 1, "cut period must be positive");
  require(max_cuts >= 1, "cut cap must be positive");
  require(workers >= 0, "worker count must be nonnegative");
}

FamilyResiduals residuals(const ExtendedProblem& ext, const PrimalState& state) {
  FamilyResiduals out;
  out.raw = coupling_row_totals(ext, state.blocks);
  std::array<double, kFamilyCount> sq{}, sc{};
  for (int r = 0; r < ext.coupling_rows(); ++r) {
    const CouplingRow& row = ext.coupling[r];
    out.raw[r] -= row.rhs;
    const int f = static_cast<int>(row.family);
    sq[f] += row.weight * out.raw[r] * out.raw[r];
    double data = row.rhs * row.rhs;
    for (const auto& t : row.terms) data += t.coeff * t.coeff;
    sc[f] += row.weight * data;
  }
  for (int f = 0; f < kFamilyCount; ++f) {
    out.norm[f] = std::sqrt(sq[f]);
    out.scale[f] = std::sqrt(sc[f]);
  }
  return out;
}

double FamilyResiduals::max_relative() const {
  double worst = 0.0;
  for (int f = 0; f < kFamilyCount; ++f)
    worst = std::max(worst, norm[f] / (1.0 + scale[f]));
  return worst;
}

double lagrange_value(const ExtendedProblem& ext, const PrimalState& state,
                      const DualState& dual) {
  double value = ext.objective_value(state.blocks);
  VectorXd total = coupling_row_totals(ext, state.blocks);
  for (int r = 0; r < ext.coupling_rows(); ++r) {
    const CouplingRow& row = ext.coupling[r];
    value += row.weight * dual.mu[r] * (total[r] - row.rhs);
  }
  return value;
}

namespace {

// Linear costs of every agent's subproblem in one pass over the coupling
// rows: multiplier terms plus the penalty cross terms with the other
// agents' blocks frozen at the current iterate.
std::vector<VectorXd> all_linear_terms(const ExtendedProblem& ext,
                                       const PrimalState& state,
                                       const DualState& dual, double kappa) {
  const int m = ext.base.agents;
  std::vector<VectorXd> q(m);
  for (int i = 0; i < m; ++i) q[i] = ext.agent[i].objective;

  std::vector<double> own(m);
  std::vector<int> touched;
  touched.reserve(m);
  for (int r = 0; r < ext.coupling_rows(); ++r) {
    const CouplingRow& row = ext.coupling[r];
    if (!penalized(row)) continue;
    // Multiplier pressure follows the true constraint split.
    for (const auto& t : row.terms)
      q[t.agent][t.col] += t.coeff * row.weight * dual.mu[r];
    // Penalty cross terms: per-agent views when present, otherwise the
    // true split with the other agents frozen.
    if (!row.views.empty()) {
      for (const auto& view : row.views) {
        double g_const = -row.rhs;
        for (const auto& t : view.others)
          g_const += t.coeff * state.blocks[t.agent][t.col];
        for (const auto& t : view.own)
          q[view.agent][t.col] += t.coeff * row.weight * kappa * g_const;
      }
      continue;
    }
    double total = 0.0;
    touched.clear();
    for (const auto& t : row.terms) {
      if (std::find(touched.begin(), touched.end(), t.agent) == touched.end()) {
        touched.push_back(t.agent);
        own[t.agent] = 0.0;
      }
      double v = t.coeff * state.blocks[t.agent][t.col];
      total += v;
      own[t.agent] += v;
    }
    for (const auto& t : row.terms) {
      const double g_const = (total - own[t.agent]) - row.rhs;
      q[t.agent][t.col] += t.coeff * row.weight * kappa * g_const;
    }
  }
  return q;
}

}  // namespace

VectorXd local_linear_term(const ExtendedProblem& ext, int agent,
                           const PrimalState& state, const DualState& dual,
                           double kappa) {
  return all_linear_terms(ext, state, dual, kappa)[agent];
}

namespace {

// Constraint system of one agent's subproblem: finite bounds, the hard
// local rows, and any coupling rows owned by this agent alone.
QpProblem local_qp_structure(const ExtendedProblem& ext, int agent,
                             double kappa) {
  const auto& blk = ext.agent[agent];
  const int width = ext.layout[agent].size();

  RowBlockBuilder rows(width);
  for (int j = 0; j < width; ++j) {
    if (blk.var_lower[j] == -kInf && blk.var_upper[j] == kInf) continue;
    int r = rows.begin_row(blk.var_lower[j], blk.var_upper[j]);
    rows.coeff(r, j, 1.0);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> lr(blk.local_rows);
  for (int r = 0; r < lr.rows(); ++r) {
    int row = rows.begin_row(blk.local_lower[r], blk.local_upper[r]);
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(lr, r);
         it; ++it)
      rows.coeff(row, it.col(), it.value());
  }
  for (const CouplingRow& row : ext.coupling) {
    if (penalized(row) || single_owner(row) != agent) continue;
    int r = rows.begin_row(row.rhs, row.rhs);
    for (const auto& t : row.terms) rows.coeff(r, t.col, t.coeff);
  }

  QpProblem qp;
  std::vector<Triplet> ptrip;
  for (const CouplingRow& row : ext.coupling) {
    if (!penalized(row)) continue;
    // own quadratic block kappa * weight * (own terms)^2
    std::vector<CouplingTerm> own;
    if (!row.views.empty()) {
      for (const auto& view : row.views)
        if (view.agent == agent) own = view.own;
    } else {
      for (const auto& t : row.terms)
        if (t.agent == agent) own.push_back(t);
    }
    for (const auto& a : own)
      for (const auto& b : own)
        ptrip.emplace_back(a.col, b.col, kappa * row.weight * a.coeff * b.coeff);
  }
  qp.P.resize(width, width);
  qp.P.setFromTriplets(ptrip.begin(), ptrip.end());
  qp.q = blk.objective;
  qp.A = rows.matrix();
  qp.lower = rows.lower();
  qp.upper = rows.upper();
  return qp;
}

class LocalWorkspace {
 public:
  LocalWorkspace(const ExtendedProblem& ext, int agent,
                 const SolverParams& params)
      : solver_(local_qp_structure(ext, agent, params.kappa), params.qp),
        agent_(agent) {}

  // Minimizes the agent's augmented Lagrangian for the given linear cost.
  VectorXd solve(const VectorXd& q) {
    solver_.update_linear_cost(q);
    if (has_warm_) solver_.warm_start(warm_x_, warm_y_);
    QpResult res = solver_.solve();
    if (res.status == QpStatus::PrimalInfeasible)
      throw SolveError("local subproblem infeasible for agent " +
                       std::to_string(agent_) +
                       " (malformed local constraint set)");
    if (res.status == QpStatus::DualInfeasible)
      throw SolveError("local subproblem unbounded for agent " +
                       std::to_string(agent_));
    warm_x_ = res.x;
    warm_y_ = res.y;
    has_warm_ = true;
    return res.x;
  }

  void seed_warm_start(const VectorXd& x) {
    warm_x_ = x;
    warm_y_ = VectorXd::Zero(solver_.problem().rows());
    has_warm_ = true;
  }

 private:
  QpSolver solver_;
  int agent_;
  VectorXd warm_x_, warm_y_;
  bool has_warm_ = false;
};

// Nearest locally feasible block to the box-clamped origin; the starting
// iterate must satisfy the local constraints so that damped averaging
// keeps them satisfied.
VectorXd initial_block(const ExtendedProblem& ext, int agent,
                       const SolverParams& params) {
  QpProblem qp = local_qp_structure(ext, agent, params.kappa);
  const int width = qp.vars();
  VectorXd target(width);
  for (int j = 0; j < width; ++j) {
    double lo = ext.agent[agent].var_lower[j];
    double hi = ext.agent[agent].var_upper[j];
    target[j] = std::min(std::max(0.0, lo), hi);
  }
  std::vector<Triplet> eye;
  for (int j = 0; j < width; ++j) eye.emplace_back(j, j, 1.0);
  qp.P.setZero();
  qp.P.setFromTriplets(eye.begin(), eye.end());
  qp.q = -target;
  QpResult res = solve_convex_qp(qp, params.qp);
  if (res.status == QpStatus::PrimalInfeasible)
    throw SolveError("local constraint set infeasible for agent " +
                     std::to_string(agent));
  if (!res.solved())
    throw SolveError("could not initialize agent " + std::to_string(agent));
  return res.x;
}

}  // namespace

VectorXd local_step(const ExtendedProblem& ext, int agent,
                    const PrimalState& state, const DualState& dual,
                    const SolverParams& params) {
  LocalWorkspace ws(ext, agent, params);
  return ws.solve(local_linear_term(ext, agent, state, dual, params.kappa));
}

PrimalState primal_update(const PrimalState& state,
                          const std::vector<VectorXd>& targets, double tau) {
  require(targets.size() == state.blocks.size(), "target block count mismatch");
  require(tau >= 0.0 && tau <= 1.0, "primal step out of range");
  PrimalState out;
  out.blocks.resize(state.blocks.size());
  for (std::size_t i = 0; i < state.blocks.size(); ++i)
    out.blocks[i] = state.blocks[i] + tau * (targets[i] - state.blocks[i]);
  return out;
}

namespace {

VectorXd dual_increments(const ExtendedProblem& ext, const PrimalState& state,
                         double kappa, double tau) {
  VectorXd inc = VectorXd::Zero(ext.coupling_rows());
  VectorXd total = coupling_row_totals(ext, state.blocks);
  for (int r = 0; r < ext.coupling_rows(); ++r) {
    const CouplingRow& row = ext.coupling[r];
    if (!penalized(row)) continue;
    inc[r] = kappa * tau * (total[r] - row.rhs);
  }
  return inc;
}

}  // namespace

DualState dual_update(const ExtendedProblem& ext, const DualState& dual,
                      const PrimalState& state, double kappa, double tau) {
  DualState out;
  out.prev_mu = dual.mu;
  out.last_step = dual_increments(ext, state, kappa, tau);
  out.mu = dual.mu + out.last_step;
  return out;
}

DualState reverse_dual_update(const ExtendedProblem& ext, const DualState& dual,
                              const PrimalState& state, double kappa,
                              double tau) {
  VectorXd inc = dual_increments(ext, state, kappa, tau);
  require(inc.size() == dual.last_step.size(),
          "dual state does not match the problem");
  for (int r = 0; r < inc.size(); ++r)
    require(inc[r] == dual.last_step[r],
            "recomputed increments do not match the recorded update");
  DualState out;
  out.mu = dual.prev_mu;
  out.prev_mu = dual.prev_mu;
  out.last_step = VectorXd::Zero(inc.size());
  return out;
}

void Trace::write_csv(std::ostream& os) const {
  const int m = rows.empty() ? 0 : static_cast<int>(rows.front().theta.size());
  os << "iter,objective";
  for (int f = 0; f < kFamilyCount; ++f)
    os << ",res_" << to_string(static_cast<Family>(f));
  for (int i = 1; i <= m; ++i) os << ",theta_" << i;
  os << ",eta_spread,elapsed_ms\n";
  os << std::setprecision(17);
  for (const auto& row : rows) {
    os << row.iter << ',' << row.objective;
    for (int f = 0; f < kFamilyCount; ++f) os << ',' << row.residual[f];
    for (int i = 0; i < m; ++i) os << ',' << row.theta[i];
    os << ',' << row.eta_spread << ',' << row.elapsed_ms << '\n';
  }
}

namespace {

PrimalState remap_primal_for_cut(const ExtendedProblem& old_ext,
                                 const ExtendedProblem& new_ext,
                                 const PrimalState& state, const VectorXd& nu) {
  PrimalState out;
  const int m = old_ext.base.agents;
  out.blocks.resize(m);
  const int L = old_ext.pool.size();
  for (int i = 0; i < m; ++i) {
    const AgentLayout& ol = old_ext.layout[i];
    const AgentLayout& nl = new_ext.layout[i];
    VectorXd nb = VectorXd::Zero(nl.size());
    const VectorXd& ob = state.blocks[i];
    for (int j = 0; j < ol.n1; ++j) nb[nl.x_col(j)] = ob[ol.x_col(j)];
    nb[nl.theta_col()] = ob[ol.theta_col()];
    nb[nl.eta_col()] = ob[ol.eta_col()];
    for (int l = 0; l < L; ++l) nb[nl.w_col(l)] = ob[ol.w_col(l)];
    // Start the new slack at the value that makes this agent's share of
    // the fresh cut tight (clipped at the sign constraint).
    nb[nl.w_col(L)] =
        std::max(0.0, ob[ol.eta_col()] - nu[i] * ob[ol.theta_col()]);
    for (int s = 0; s < ol.scenarios; ++s) {
      for (int j = 0; j < ol.n2; ++j) nb[nl.y_col(s, j)] = ob[ol.y_col(s, j)];
      for (int j = 0; j < ol.d3; ++j) nb[nl.z_col(s, j)] = ob[ol.z_col(s, j)];
      if (ol.d3 > 0) nb[nl.r_col(s)] = ob[ol.r_col(s)];
    }
    for (int j = 0; j < ol.aux; ++j) nb[nl.aux_col(j)] = ob[ol.aux_col(j)];
    out.blocks[i] = std::move(nb);
  }
  return out;
}

DualState remap_dual_for_cut(const ExtendedProblem& old_ext,
                             const ExtendedProblem& new_ext,
                             const DualState& dual) {
  DualState out = DualState::zero(new_ext);
  auto copy_span = [&](Family f) {
    auto os = old_ext.span(f);
    auto ns = new_ext.span(f);
    out.mu.segment(ns.begin, os.size) = dual.mu.segment(os.begin, os.size);
  };
  copy_span(Family::Cuts);  // new cut row sits at the end with multiplier 0
  copy_span(Family::FirstStage);
  copy_span(Family::Dynamics);
  copy_span(Family::SysCost);
  const int old_coords = 1 + old_ext.pool.size();
  const int new_coords = 1 + new_ext.pool.size();
  const auto ov = old_ext.span(Family::ConsensusV);
  const auto nv = new_ext.span(Family::ConsensusV);
  for (std::size_t a = 0; a < old_ext.tree.arcs.size(); ++a)
    for (int l = 0; l < old_coords; ++l)
      out.mu[nv.begin + static_cast<int>(a) * new_coords + l] =
          dual.mu[ov.begin + static_cast<int>(a) * old_coords + l];
  copy_span(Family::ConsensusZ);
  out.prev_mu = out.mu;
  return out;
}

}  // namespace

RunResult run(const ExtendedProblem& ext_in, const SolverParams& params) {
  const int m = ext_in.base.agents;
  params.validate(m);
  {
    ValidationReport report = validate(ext_in);
    if (!report.ok) throw InvalidInput("invalid problem: " + report.summary());
  }

  RunResult result;
  result.problem = ext_in;
  ExtendedProblem& ext = result.problem;

  bool any_penalized = false;
  for (const auto& row : ext.coupling) any_penalized |= penalized(row);
  // Without penalized coupling the local solves are exact; no damping needed.
  const double tau = any_penalized ? params.tau : 1.0;

  PrimalState state;
  state.blocks.resize(m);
  std::vector<std::unique_ptr<LocalWorkspace>> work(m);

  const int threads = params.workers > 0 ? params.workers : 0;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) \
    num_threads(threads > 0 ? std::min(threads, m) : omp_get_max_threads()) \
    if (params.workers != 1)
#endif
  for (int i = 0; i < m; ++i) {
    state.blocks[i] = initial_block(ext, i, params);
    work[i] = std::make_unique<LocalWorkspace>(ext, i, params);
    work[i]->seed_warm_start(state.blocks[i]);
  }

  DualState dual = DualState::zero(ext);
  std::vector<VectorXd> targets(m);

  // Ergodic window: near-degenerate instances settle into small orbits
  // around the optimum (several outer-measure cuts active at once); the
  // coupling rows are linear, so the window average cancels the orbit and
  // satisfies them. Windows restart with doubling length so early
  // transients wash out.
  PrimalState window_sum;
  window_sum.blocks.assign(m, VectorXd());
  int window_count = 0;
  int window_limit = 64;
  auto reset_window = [&] {
    for (int i = 0; i < m; ++i) window_sum.blocks[i].setZero();
    window_count = 0;
  };
  auto window_average = [&] {
    PrimalState avg;
    avg.blocks.resize(m);
    for (int i = 0; i < m; ++i)
      avg.blocks[i] = window_sum.blocks[i] / window_count;
    return avg;
  };

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  int iter = 0;
  bool converged = false;
  while (iter < params.max_iterations) {
    ++iter;

    // Step 1: Jacobi local solves against the frozen iterate.
    std::vector<VectorXd> q = all_linear_terms(ext, state, dual, params.kappa);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) \
    num_threads(threads > 0 ? std::min(threads, m) : omp_get_max_threads()) \
    if (params.workers != 1)
#endif
    for (int i = 0; i < m; ++i) targets[i] = work[i]->solve(q[i]);

    // Step 2: damped primal averaging.
    PrimalState next = primal_update(state, targets, tau);
    double step_size = 0.0, state_scale = 0.0;
    for (int i = 0; i < m; ++i) {
      step_size = std::max(step_size,
                           (next.blocks[i] - state.blocks[i]).cwiseAbs().maxCoeff());
      state_scale =
          std::max(state_scale, state.blocks[i].cwiseAbs().maxCoeff());
    }
    state = std::move(next);

    // Step 3: residuals, multiplier update, trace.
    FamilyResiduals res = residuals(ext, state);
    dual = dual_update(ext, dual, state, params.kappa, tau);

    if (window_count == 0)
      window_sum = state;
    else
      for (int i = 0; i < m; ++i) window_sum.blocks[i] += state.blocks[i];
    ++window_count;

    IterationRecord rec;
    rec.iter = iter;
    rec.objective = ext.objective_value(state.blocks);
    rec.residual = res.norm;
    rec.theta = state.theta(ext);
    rec.eta_spread = state.eta_spread(ext);
    rec.elapsed_ms = elapsed_ms();
    result.trace.rows.push_back(std::move(rec));

    const bool primal_ok = res.max_relative() < params.tolerance;
    const bool dual_ok = dual.last_step.norm() < params.dual_tolerance;
    const bool step_ok = step_size <= params.tolerance * (1.0 + state_scale);
    const bool inst_ok = primal_ok && dual_ok && step_ok;

    bool avg_ok = false;
    PrimalState avg;
    if (!inst_ok && window_count >= 32) {
      avg = window_average();
      avg_ok = residuals(ext, avg).max_relative() < params.tolerance;
    }
    const bool stop_candidate = inst_ok || avg_ok;
    const bool cut_round = (iter % params.cut_period == 0) || stop_candidate;

    if (cut_round) {
      const PrimalState& incumbent = avg_ok ? avg : state;
      VectorXd theta = incumbent.theta(ext);
      VectorXd nu = generate_cut(theta, ext.base.risk.outer,
                                 ext.base.risk.weights);
      const VectorXd& c = ext.base.risk.weights.c;
      double supported = c.dot(nu.cwiseProduct(theta));
      double eta_bar = c.dot(incumbent.eta(ext));
      bool violated =
          supported > eta_bar + params.tolerance * (1.0 + std::abs(eta_bar));
      bool added = false;
      if (violated && ext.pool.size() < params.max_cuts) {
        ExtendedProblem grown = with_added_cut(ext, nu);
        if (grown.pool.size() > ext.pool.size()) {
          state = remap_primal_for_cut(ext, grown, state, nu);
          dual = remap_dual_for_cut(ext, grown, dual);
          ext = std::move(grown);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) \
    num_threads(threads > 0 ? std::min(threads, m) : omp_get_max_threads()) \
    if (params.workers != 1)
#endif
          for (int i = 0; i < m; ++i) {
            work[i] = std::make_unique<LocalWorkspace>(ext, i, params);
            work[i]->seed_warm_start(state.blocks[i]);
          }
          window_sum.blocks.assign(m, VectorXd());
          reset_window();
          window_limit = 64;
          added = true;
        }
      }
      if (added) continue;  // pool changed; keep iterating
      if (stop_candidate) {
        if (avg_ok) state = std::move(avg);
        converged = true;
        break;
      }
    }

    if (window_count >= window_limit) {
      reset_window();
      window_limit *= 2;
    }
  }

  result.converged = converged;
  result.iterations = iter;
  result.primal = state;
  result.dual = dual;
  result.objective = ext.objective_value(state.blocks);
  result.final_residuals = residuals(ext, state);
  return result;
}

CentralizedSolution solve_centralized(const TwoStageSystemProblem& problem,
                                      const QpSettings& settings) {
  problem.validate();
  const int m = problem.agents;
  const int N = problem.scenarios;
  const int d1 = problem.first_stage_rows();
  const int d2 = problem.dynamics_rows();
  const int d3 = problem.systemic_dim;
  const VectorXd& c = problem.risk.weights.c;

  // Column layout.
  std::vector<int> xo(m), yo(m), ro(m), to(m), ao(m), aux_n(m);
  std::vector<EpigraphTemplate> inner;
  int pos = 0;
  for (int i = 0; i < m; ++i) {
    const int n1 = problem.first_stage[i].set.dim();
    const int n2 = problem.second_stage[i][0].set.dim();
    inner.push_back(epigraph_reformulation(problem.risk.inner[i]));
    aux_n[i] = inner[i].aux_count(N);
    xo[i] = pos;
    pos += n1;
    yo[i] = pos;
    pos += N * n2;
    ro[i] = pos;
    if (d3 > 0) pos += N;
    to[i] = pos;
    pos += 1;
    ao[i] = pos;
    pos += aux_n[i];
  }
  const int zo = pos;
  pos += N * d3;
  EpigraphTemplate outer = epigraph_reformulation(problem.risk.outer);
  const int outer_aux = outer.aux_count(m);
  const int To = pos;
  pos += 1;
  const int Oo = pos;
  pos += outer_aux;
  const int n = pos;

  VectorXd lo = VectorXd::Constant(n, -kInf);
  VectorXd hi = VectorXd::Constant(n, kInf);
  VectorXd q = VectorXd::Zero(n);
  double offset = 0.0;

  RowBlockBuilder rows(n);
  for (int i = 0; i < m; ++i) {
    const auto& fs = problem.first_stage[i];
    const int n1 = fs.set.dim();
    const int n2 = problem.second_stage[i][0].set.dim();
    for (int j = 0; j < n1; ++j) {
      lo[xo[i] + j] = fs.set.lower[j];
      hi[xo[i] + j] = fs.set.upper[j];
      q[xo[i] + j] = fs.cost[j];
    }
    offset += fs.cost_offset;
    for (int r = 0; r < fs.set.rows.rows(); ++r) {
      int row = rows.begin_row(fs.set.row_lower[r], fs.set.row_upper[r]);
      for (int j = 0; j < n1; ++j)
        rows.coeff(row, xo[i] + j, fs.set.rows(r, j));
    }
    for (int s = 0; s < N; ++s) {
      const auto& ss = problem.second_stage[i][s];
      for (int j = 0; j < n2; ++j) {
        lo[yo[i] + s * n2 + j] = ss.set.lower[j];
        hi[yo[i] + s * n2 + j] = ss.set.upper[j];
      }
      for (int r = 0; r < ss.set.rows.rows(); ++r) {
        int row = rows.begin_row(ss.set.row_lower[r], ss.set.row_upper[r]);
        for (int j = 0; j < n2; ++j)
          rows.coeff(row, yo[i] + s * n2 + j, ss.set.rows(r, j));
      }
      for (int r = 0; r < ss.link_rows(); ++r) {
        int row = rows.begin_row(ss.link_lower[r], ss.link_upper[r]);
        for (int j = 0; j < n1; ++j)
          rows.coeff(row, xo[i] + j, ss.link_tech(r, j));
        for (int j = 0; j < n2; ++j)
          rows.coeff(row, yo[i] + s * n2 + j, ss.link_recourse(r, j));
      }
      if (d3 > 0) {
        lo[ro[i] + s] = 0.0;
        hi[ro[i] + s] = systemic_share_upper(problem.systemic[s]);
      }
    }
    VectorXd aux_lo, aux_hi;
    inner[i].aux_bounds(N, aux_lo, aux_hi);
    for (int j = 0; j < aux_n[i]; ++j) {
      lo[ao[i] + j] = aux_lo[j];
      hi[ao[i] + j] = aux_hi[j];
    }
  }
  for (int s = 0; s < N && d3 > 0; ++s)
    for (int j = 0; j < d3; ++j) {
      lo[zo + s * d3 + j] = problem.systemic[s].set.lower[j];
      hi[zo + s * d3 + j] = problem.systemic[s].set.upper[j];
    }
  VectorXd outer_lo, outer_hi;
  if (outer_aux > 0) {
    outer.aux_bounds(m, outer_lo, outer_hi);
    for (int j = 0; j < outer_aux; ++j) {
      lo[Oo + j] = outer_lo[j];
      hi[Oo + j] = outer_hi[j];
    }
  }
  q[To] = 1.0;

  for (int r = 0; r < d1; ++r) {
    int row = rows.begin_row(problem.coupling_rhs[r], problem.coupling_rhs[r]);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < problem.first_stage[i].set.dim(); ++j)
        rows.coeff(row, xo[i] + j, problem.first_stage[i].coupling(r, j));
  }
  for (int i = 0; i < m; ++i)
    for (int s = 0; s < N; ++s)
      for (int r = 0; r < d2; ++r) {
        const auto& own = problem.second_stage[i][s];
        int row = rows.begin_row(own.offset[r], own.offset[r]);
        for (int j = 0; j < problem.first_stage[i].set.dim(); ++j)
          rows.coeff(row, xo[i] + j, own.tech(r, j));
        for (int a = 0; a < m; ++a) {
          const auto& other = problem.second_stage[a][s];
          const int n2a = other.set.dim();
          for (int j = 0; j < n2a; ++j)
            rows.coeff(row, yo[a] + s * n2a + j, other.recourse(r, j));
        }
        for (int j = 0; j < d3; ++j)
          rows.coeff(row, zo + s * d3 + j, problem.systemic[s].coupling(r, j));
      }
  for (int s = 0; s < N && d3 > 0; ++s) {
    int row = rows.begin_row(0.0, 0.0);
    for (int j = 0; j < d3; ++j)
      rows.coeff(row, zo + s * d3 + j, problem.systemic[s].cost[j]);
    for (int i = 0; i < m; ++i) rows.coeff(row, ro[i] + s, -1.0);
  }
  for (int i = 0; i < m; ++i) {
    const int n2 = problem.second_stage[i][0].set.dim();
    std::vector<LinearExpr> cost(N);
    for (int s = 0; s < N; ++s) {
      for (int j = 0; j < n2; ++j)
        cost[s].add(yo[i] + s * n2 + j, problem.second_stage[i][s].cost[j]);
      if (d3 > 0) cost[s].add(ro[i] + s, 1.0);
    }
    inner[i].instantiate(problem.prob, cost, to[i], ao[i], rows);
  }
  {
    std::vector<LinearExpr> profile(m);
    for (int i = 0; i < m; ++i) profile[i].add(to[i], 1.0);
    outer.instantiate(problem.risk.weights.as_prob(), profile, To, Oo, rows);
  }
  for (int j = 0; j < n; ++j) {
    if (lo[j] == -kInf && hi[j] == kInf) continue;
    int row = rows.begin_row(lo[j], hi[j]);
    rows.coeff(row, j, 1.0);
  }

  QpProblem qp;
  qp.P.resize(n, n);
  qp.q = q;
  qp.A = rows.matrix();
  qp.lower = rows.lower();
  qp.upper = rows.upper();
  QpResult res = solve_convex_qp(qp, settings);

  CentralizedSolution sol;
  sol.status = res.status;
  if (res.status != QpStatus::Solved && res.status != QpStatus::MaxIterations)
    return sol;

  sol.objective = res.objective + offset;
  sol.x.resize(m);
  sol.y.resize(m);
  sol.z.resize(N);
  sol.r = MatrixXd::Zero(m, N);
  sol.theta.resize(m);
  for (int i = 0; i < m; ++i) {
    const int n1 = problem.first_stage[i].set.dim();
    const int n2 = problem.second_stage[i][0].set.dim();
    sol.x[i] = res.x.segment(xo[i], n1);
    sol.y[i].resize(N);
    for (int s = 0; s < N; ++s)
      sol.y[i][s] = res.x.segment(yo[i] + s * n2, n2);
    if (d3 > 0)
      for (int s = 0; s < N; ++s) sol.r(i, s) = res.x[ro[i] + s];
    sol.theta[i] = res.x[to[i]];
  }
  for (int s = 0; s < N; ++s)
    sol.z[s] = d3 > 0 ? VectorXd(res.x.segment(zo + s * d3, d3)) : VectorXd();
  sol.outer_value = evaluate(problem.risk.outer,
                             DiscreteRandomVariable(sol.theta, problem.risk.weights.as_prob()));
  return sol;
}

}  // namespace sysrisk
