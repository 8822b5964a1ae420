#include "sysrisk/disaster.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace sysrisk {

int FacilityNetwork::arc_count() const {
  int count = 0;
  for (const auto& out : neighbors) count += static_cast<int>(out.size());
  return count;
}

void FacilityNetwork::validate() const {
  const int m = facilities();
  require(m >= 1, "network needs at least one facility");
  require(coordinates.cols() == 2, "coordinates must be planar");
  require(static_cast<int>(neighbors.size()) == m, "neighbor list size mismatch");
  for (int i = 0; i < m; ++i) {
    std::vector<int> seen;
    for (int j : neighbors[i]) {
      require(j >= 0 && j < m && j != i, "invalid neighbor index");
      require(std::find(seen.begin(), seen.end(), j) == seen.end(),
              "duplicate neighbor");
      seen.push_back(j);
    }
  }
  require(prealloc_cost.size() == m && salvage_cost.size() == m &&
              shortage_cost.size() == m && usable_fraction.size() == m,
          "per-facility cost vector size mismatch");
  require(ship_cost.rows() == m && ship_cost.cols() == m &&
              capacity.rows() == m && capacity.cols() == m,
          "arc data shape mismatch");
  for (int i = 0; i < m; ++i) {
    require(usable_fraction[i] >= 0.0 && usable_fraction[i] <= 1.0,
            "usable fraction must lie in [0, 1]");
    for (int j : neighbors[i])
      require(capacity(i, j) >= 0.0, "arc capacity must be nonnegative");
  }
  require(budget > 0.0, "budget must be positive");
}

FacilityNetwork default_network() {
  FacilityNetwork net;
  const int m = 5;
  net.coordinates.resize(m, 2);
  net.coordinates << 0.2, 0.2,
                     0.8, 0.2,
                     0.5, 0.5,
                     0.2, 0.8,
                     0.8, 0.8;
  net.neighbors.resize(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (j != i) net.neighbors[i].push_back(j);
  net.prealloc_cost = VectorXd::Zero(m);
  net.salvage_cost = VectorXd::Constant(m, 5.0);
  net.shortage_cost = VectorXd::Constant(m, 5.0);
  net.ship_cost = MatrixXd::Constant(m, m, 1.0);
  net.capacity = MatrixXd::Constant(m, m, 1.5);
  net.usable_fraction = VectorXd::Constant(m, 0.95);
  net.budget = 25.0;
  return net;
}

void DisasterInstance::validate() const {
  network.validate();
  const int m = network.facilities();
  require(scenarios >= 1, "instance needs at least one scenario");
  require(epicenters.rows() == scenarios && epicenters.cols() == 2,
          "epicenter table shape mismatch");
  require(demand.rows() == m && demand.cols() == scenarios,
          "demand table shape mismatch");
  require((demand.array() >= 0.0).all(), "negative demand");
  prob.validate();
  require(prob.size() == scenarios, "probability count mismatch");
  require(kappa0 >= 0.0 && kappa0 <= 1.0, "outer weight must lie in [0, 1]");
  require(kappa_inner.size() == m, "inner weight count mismatch");
  for (int i = 0; i < m; ++i)
    require(kappa_inner[i] >= 0.0 && kappa_inner[i] <= 1.0,
            "inner weight must lie in [0, 1]");
  weights.validate();
  require(weights.size() == m, "scalarization weight count mismatch");
}

DisasterInstance generate_instance(std::uint64_t seed, int scenarios,
                                   double nu1, double nu2,
                                   FacilityNetwork network) {
  network.validate();
  require(scenarios >= 1, "scenario count must be positive");
  require(nu1 > 0.0, "demand scale must be positive");

  DisasterInstance inst;
  inst.network = std::move(network);
  inst.seed = seed;
  inst.scenarios = scenarios;
  inst.nu1 = nu1;
  inst.nu2 = nu2;

  const int m = inst.network.facilities();
  inst.epicenters.resize(scenarios, 2);
  inst.demand.resize(m, scenarios);
  Rng rng(seed);
  for (int s = 0; s < scenarios; ++s) {
    const double ex = rng.uniform01();
    const double ey = rng.uniform01();
    inst.epicenters(s, 0) = ex;
    inst.epicenters(s, 1) = ey;
    for (int i = 0; i < m; ++i) {
      const double dx = inst.network.coordinates(i, 0) - ex;
      const double dy = inst.network.coordinates(i, 1) - ey;
      inst.demand(i, s) = nu1 / (1.0 + std::exp(nu2 * std::hypot(dx, dy)));
    }
  }
  inst.prob = ProbabilityVector::uniform(scenarios);
  inst.kappa0 = 0.5;
  inst.kappa_inner = VectorXd::Constant(m, 0.5);
  inst.weights = ScalarizationWeights::uniform(m);
  inst.validate();
  return inst;
}

const char* to_string(Aggregation aggregation) {
  switch (aggregation) {
    case Aggregation::Expectation: return "expectation";
    case Aggregation::Semideviation: return "semideviation";
    case Aggregation::LinearScalarization: return "linear-scalarization";
  }
  return "unknown";
}

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "expectation") return Aggregation::Expectation;
  if (name == "semideviation") return Aggregation::Semideviation;
  if (name == "linear-scalarization") return Aggregation::LinearScalarization;
  throw InvalidInput("unknown aggregation mode: " + name);
}

namespace {

// Generous but finite caps keeping the second-stage sets compact without
// cutting off an optimal solution (surplus at most the usable stock plus
// all inflows, shortage at most demand plus all outflows).
double surplus_cap(const DisasterInstance& inst, int i) {
  double cap = inst.network.usable_fraction[i] * inst.network.budget;
  for (int j = 0; j < inst.network.facilities(); ++j)
    for (int k : inst.network.neighbors[j])
      if (k == i) cap += inst.network.capacity(j, k);
  return cap;
}

double shortage_cap(const DisasterInstance& inst, int i) {
  double cap = inst.demand.row(i).maxCoeff();
  for (int k : inst.network.neighbors[i]) cap += inst.network.capacity(i, k);
  return cap;
}

// Realized second-stage costs per (facility, scenario).
MatrixXd scenario_costs(const DisasterInstance& inst,
                        const std::vector<MatrixXd>& flows,
                        const MatrixXd& surplus, const MatrixXd& shortage) {
  const int m = inst.network.facilities();
  MatrixXd Q(m, inst.scenarios);
  for (int s = 0; s < inst.scenarios; ++s)
    for (int i = 0; i < m; ++i) {
      double cost = inst.network.salvage_cost[i] * surplus(i, s) +
                    inst.network.shortage_cost[i] * shortage(i, s);
      for (int k : inst.network.neighbors[i])
        cost += inst.network.ship_cost(i, k) * flows[s](i, k);
      Q(i, s) = cost;
    }
  return Q;
}

VectorXd theta_from_costs(const DisasterInstance& inst, const MatrixXd& Q) {
  const int m = inst.network.facilities();
  VectorXd theta(m);
  for (int i = 0; i < m; ++i)
    theta[i] = evaluate(RiskMeasureSpec::semideviation(inst.kappa_inner[i]),
                        DiscreteRandomVariable(Q.row(i).transpose(), inst.prob));
  return theta;
}

double scalarized_risk(const DisasterInstance& inst, const MatrixXd& Q) {
  VectorXd w = Q.transpose() * inst.weights.c;
  return evaluate(RiskMeasureSpec::semideviation(inst.kappa0),
                  DiscreteRandomVariable(w, inst.prob));
}

double aggregate_theta(const DisasterInstance& inst, Aggregation aggregation,
                       const VectorXd& theta) {
  DiscreteRandomVariable profile(theta, inst.weights.as_prob());
  if (aggregation == Aggregation::Expectation)
    return evaluate(RiskMeasureSpec::expectation(), profile);
  return evaluate(RiskMeasureSpec::semideviation(inst.kappa0), profile);
}

DisasterSolution finalize_solution(const DisasterInstance& inst,
                                   Aggregation aggregation, VectorXd allocation,
                                   std::vector<MatrixXd> flows,
                                   MatrixXd surplus, MatrixXd shortage,
                                   QpStatus status, int iterations) {
  DisasterSolution sol;
  sol.status = status;
  sol.converged = status == QpStatus::Solved;
  sol.iterations = iterations;
  sol.allocation = std::move(allocation);
  sol.flows = std::move(flows);
  sol.surplus = std::move(surplus);
  sol.shortage = std::move(shortage);
  // Solver-tolerance noise: clip sign violations and budget overshoot.
  // The flow balance moves by at most the same noise level.
  sol.allocation = sol.allocation.cwiseMax(0.0);
  if (sol.allocation.sum() > inst.network.budget)
    sol.allocation *= inst.network.budget / sol.allocation.sum();
  for (auto& f : sol.flows) f = f.cwiseMax(0.0);
  sol.surplus = sol.surplus.cwiseMax(0.0);
  sol.shortage = sol.shortage.cwiseMax(0.0);
  MatrixXd Q = scenario_costs(inst, sol.flows, sol.surplus, sol.shortage);
  sol.theta = theta_from_costs(inst, Q);
  sol.total_risk = aggregate_theta(inst, aggregation, sol.theta);
  sol.rho_c = scalarized_risk(inst, Q);
  const double first_stage = inst.network.prealloc_cost.dot(sol.allocation);
  sol.objective = first_stage + (aggregation == Aggregation::LinearScalarization
                                     ? sol.rho_c
                                     : sol.total_risk);
  return sol;
}

}  // namespace

DirectModel formulate_direct(const DisasterInstance& instance,
                             Aggregation aggregation) {
  instance.validate();
  const int m = instance.network.facilities();
  const int N = instance.scenarios;
  const auto& net = instance.network;

  DirectModel model;
  model.aggregation = aggregation;
  for (int i = 0; i < m; ++i)
    for (int k : net.neighbors[i]) model.arcs.emplace_back(i, k);
  const int A = static_cast<int>(model.arcs.size());

  model.alloc0 = 0;
  model.flow0 = m;
  model.surplus0 = model.flow0 + N * A;
  model.shortage0 = model.surplus0 + N * m;
  model.shortfall0 = model.shortage0 + N * m;
  model.theta0 = model.shortfall0 + N * m;
  int pos = model.theta0 + m;
  if (aggregation == Aggregation::Semideviation) {
    model.fair0 = pos;
    pos += m;
  } else if (aggregation == Aggregation::LinearScalarization) {
    model.total0 = pos;
    pos += N + 1;  // shortfalls of the scalarized cost plus its risk value
  }
  const int n = pos;

  VectorXd q = VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) q[model.alloc0 + i] = net.prealloc_cost[i];
  switch (aggregation) {
    case Aggregation::Expectation:
      for (int i = 0; i < m; ++i)
        q[model.theta0 + i] = instance.weights.c[i];
      break;
    case Aggregation::Semideviation:
      for (int i = 0; i < m; ++i) {
        q[model.theta0 + i] = instance.weights.c[i];
        q[model.fair0 + i] = instance.weights.c[i] * instance.kappa0;
      }
      break;
    case Aggregation::LinearScalarization:
      q[model.total0 + N] = 1.0;
      break;
  }

  RowBlockBuilder rows(n);
  // Flow balance, one row per (scenario, facility).
  model.balance_row0 = 0;
  for (int s = 0; s < N; ++s)
    for (int i = 0; i < m; ++i) {
      int row = rows.begin_row(instance.demand(i, s), instance.demand(i, s));
      rows.coeff(row, model.alloc0 + i, net.usable_fraction[i]);
      for (int a = 0; a < A; ++a) {
        auto [from, to] = model.arcs[a];
        if (to == i) rows.coeff(row, model.flow0 + s * A + a, 1.0);
        if (from == i) rows.coeff(row, model.flow0 + s * A + a, -1.0);
      }
      rows.coeff(row, model.surplus0 + s * m + i, -1.0);
      rows.coeff(row, model.shortage0 + s * m + i, 1.0);
    }
  model.budget_row = rows.begin_row(-kInf, net.budget);
  for (int i = 0; i < m; ++i) rows.coeff(model.budget_row, model.alloc0 + i, 1.0);
  if (aggregation == Aggregation::Semideviation) {
    model.fairness_row0 = rows.rows();
    for (int i = 0; i < m; ++i) {
      int row = rows.begin_row(-kInf, 0.0);
      for (int j = 0; j < m; ++j)
        rows.coeff(row, model.theta0 + j,
                   (j == i ? 1.0 : 0.0) - instance.weights.c[j]);
      rows.coeff(row, model.fair0 + i, -1.0);
    }
  }
  // Per-facility risk values.
  for (int i = 0; i < m; ++i) {
    std::vector<LinearExpr> cost(N);
    for (int s = 0; s < N; ++s) {
      for (int a = 0; a < A; ++a)
        if (model.arcs[a].first == i)
          cost[s].add(model.flow0 + s * A + a,
                      net.ship_cost(i, model.arcs[a].second));
      cost[s].add(model.surplus0 + s * m + i, net.salvage_cost[i]);
      cost[s].add(model.shortage0 + s * m + i, net.shortage_cost[i]);
    }
    epigraph_reformulation(RiskMeasureSpec::semideviation(instance.kappa_inner[i]))
        .instantiate(instance.prob, cost, model.theta0 + i,
                     model.shortfall0 + i * N, rows);
  }
  if (aggregation == Aggregation::LinearScalarization) {
    std::vector<LinearExpr> cost(N);
    for (int s = 0; s < N; ++s)
      for (int i = 0; i < m; ++i) {
        const double ci = instance.weights.c[i];
        for (int a = 0; a < A; ++a)
          if (model.arcs[a].first == i)
            cost[s].add(model.flow0 + s * A + a,
                        ci * net.ship_cost(i, model.arcs[a].second));
        cost[s].add(model.surplus0 + s * m + i, ci * net.salvage_cost[i]);
        cost[s].add(model.shortage0 + s * m + i, ci * net.shortage_cost[i]);
      }
    epigraph_reformulation(RiskMeasureSpec::semideviation(instance.kappa0))
        .instantiate(instance.prob, cost, model.total0 + N, model.total0, rows);
  }
  // Variable bounds.
  for (int i = 0; i < m; ++i) {
    int row = rows.begin_row(0.0, kInf);
    rows.coeff(row, model.alloc0 + i, 1.0);
  }
  for (int s = 0; s < N; ++s)
    for (int a = 0; a < A; ++a) {
      auto [from, to] = model.arcs[a];
      int row = rows.begin_row(0.0, net.capacity(from, to));
      rows.coeff(row, model.flow0 + s * A + a, 1.0);
    }
  for (int j = model.surplus0; j < model.theta0; ++j) {
    int row = rows.begin_row(0.0, kInf);  // surplus, shortage, shortfalls
    rows.coeff(row, j, 1.0);
  }
  if (aggregation == Aggregation::Semideviation)
    for (int i = 0; i < m; ++i) {
      int row = rows.begin_row(0.0, kInf);
      rows.coeff(row, model.fair0 + i, 1.0);
    }
  if (aggregation == Aggregation::LinearScalarization)
    for (int s = 0; s < N; ++s) {
      int row = rows.begin_row(0.0, kInf);
      rows.coeff(row, model.total0 + s, 1.0);
    }

  model.qp.P.resize(n, n);
  model.qp.q = q;
  model.qp.A = rows.matrix();
  model.qp.lower = rows.lower();
  model.qp.upper = rows.upper();
  return model;
}

DisasterSolution solve_direct(const DisasterInstance& instance,
                              Aggregation aggregation,
                              const QpSettings& settings) {
  DirectModel model = formulate_direct(instance, aggregation);
  // The reported solution must satisfy flow balance well inside 1e-6;
  // solve tight (the active-set polish makes this cheap).
  QpSettings tuned = settings;
  tuned.eps_abs = std::min(tuned.eps_abs, 1e-9);
  tuned.eps_rel = std::min(tuned.eps_rel, 1e-9);
  QpResult res = solve_convex_qp(model.qp, tuned);

  const int m = instance.network.facilities();
  const int N = instance.scenarios;
  const int A = static_cast<int>(model.arcs.size());
  VectorXd allocation = res.x.segment(model.alloc0, m);
  std::vector<MatrixXd> flows(N, MatrixXd::Zero(m, m));
  for (int s = 0; s < N; ++s)
    for (int a = 0; a < A; ++a)
      flows[s](model.arcs[a].first, model.arcs[a].second) =
          res.x[model.flow0 + s * A + a];
  MatrixXd surplus(m, N), shortage(m, N);
  for (int s = 0; s < N; ++s)
    for (int i = 0; i < m; ++i) {
      surplus(i, s) = res.x[model.surplus0 + s * m + i];
      shortage(i, s) = res.x[model.shortage0 + s * m + i];
    }
  return finalize_solution(instance, aggregation, std::move(allocation),
                           std::move(flows), std::move(surplus),
                           std::move(shortage), res.status, res.iterations);
}

TwoStageSystemProblem to_two_stage(const DisasterInstance& instance,
                                   Aggregation aggregation) {
  instance.validate();
  require(aggregation != Aggregation::LinearScalarization,
          "the scalarized mode has no risk-profile form; solve it directly");
  const int m = instance.network.facilities();
  const int N = instance.scenarios;
  const auto& net = instance.network;

  TwoStageSystemProblem p;
  p.agents = m;
  p.scenarios = N;
  p.prob = instance.prob;
  p.coupling_rhs = VectorXd::Constant(1, net.budget);
  p.systemic_dim = 0;
  p.first_stage.resize(m);
  p.second_stage.resize(m);

  for (int i = 0; i < m; ++i) {
    const int deg = static_cast<int>(net.neighbors[i].size());
    const int n2 = deg + 3;  // outgoing flows, surplus, shortage, usable stock

    auto& fs = p.first_stage[i];
    fs.cost = VectorXd::Zero(2);
    fs.cost[0] = net.prealloc_cost[i];
    fs.set = LocalSet::box(VectorXd::Zero(2),
                           VectorXd::Constant(2, net.budget));
    fs.coupling = MatrixXd::Ones(1, 2);  // allocation plus budget slack

    p.second_stage[i].resize(N);
    for (int s = 0; s < N; ++s) {
      auto& ss = p.second_stage[i][s];
      ss.cost = VectorXd::Zero(n2);
      for (int a = 0; a < deg; ++a)
        ss.cost[a] = net.ship_cost(i, net.neighbors[i][a]);
      ss.cost[deg] = net.salvage_cost[i];
      ss.cost[deg + 1] = net.shortage_cost[i];

      ss.tech = MatrixXd::Zero(m, 2);
      ss.recourse = MatrixXd::Zero(m, n2);
      for (int a = 0; a < deg; ++a) {
        const int to = net.neighbors[i][a];
        ss.recourse(to, a) += 1.0;  // inflow at the receiving facility
        ss.recourse(i, a) -= 1.0;   // outflow here
      }
      ss.recourse(i, deg) = -1.0;      // surplus
      ss.recourse(i, deg + 1) = 1.0;   // shortage
      ss.recourse(i, deg + 2) = 1.0;   // usable stock
      ss.offset = instance.demand.col(s);

      VectorXd lo = VectorXd::Zero(n2);
      VectorXd hi(n2);
      for (int a = 0; a < deg; ++a) hi[a] = net.capacity(i, net.neighbors[i][a]);
      hi[deg] = surplus_cap(instance, i);
      hi[deg + 1] = shortage_cap(instance, i);
      hi[deg + 2] = net.usable_fraction[i] * net.budget;
      ss.set = LocalSet::box(lo, hi);

      // usable stock = usable fraction * allocation (agent-private link)
      ss.link_tech = MatrixXd::Zero(1, 2);
      ss.link_tech(0, 0) = -net.usable_fraction[i];
      ss.link_recourse = MatrixXd::Zero(1, n2);
      ss.link_recourse(0, deg + 2) = 1.0;
      ss.link_lower = VectorXd::Zero(1);
      ss.link_upper = VectorXd::Zero(1);
    }
  }

  p.risk.weights = instance.weights;
  p.risk.outer = aggregation == Aggregation::Expectation
                     ? RiskMeasureSpec::expectation()
                     : RiskMeasureSpec::semideviation(instance.kappa0);
  for (int i = 0; i < m; ++i)
    p.risk.inner.push_back(
        RiskMeasureSpec::semideviation(instance.kappa_inner[i]));
  p.validate();
  return p;
}

namespace {

DisasterSolution from_stage_values(const DisasterInstance& instance,
                                   Aggregation aggregation,
                                   const std::vector<VectorXd>& x,
                                   const std::vector<std::vector<VectorXd>>& y,
                                   QpStatus status, int iterations) {
  const int m = instance.network.facilities();
  const int N = instance.scenarios;
  VectorXd allocation(m);
  std::vector<MatrixXd> flows(N, MatrixXd::Zero(m, m));
  MatrixXd surplus(m, N), shortage(m, N);
  for (int i = 0; i < m; ++i) {
    allocation[i] = x[i][0];
    const int deg = static_cast<int>(instance.network.neighbors[i].size());
    for (int s = 0; s < N; ++s) {
      for (int a = 0; a < deg; ++a)
        flows[s](i, instance.network.neighbors[i][a]) = y[i][s][a];
      surplus(i, s) = y[i][s][deg];
      shortage(i, s) = y[i][s][deg + 1];
    }
  }
  return finalize_solution(instance, aggregation, std::move(allocation),
                           std::move(flows), std::move(surplus),
                           std::move(shortage), status, iterations);
}

}  // namespace

DisasterSolution solution_from_two_stage(const DisasterInstance& instance,
                                         Aggregation aggregation,
                                         const ExtendedProblem& ext,
                                         const PrimalState& state) {
  const int m = instance.network.facilities();
  const int N = instance.scenarios;
  std::vector<VectorXd> x(m);
  std::vector<std::vector<VectorXd>> y(m, std::vector<VectorXd>(N));
  for (int i = 0; i < m; ++i) {
    const AgentLayout& lay = ext.layout[i];
    x[i] = VectorXd(lay.n1);
    for (int j = 0; j < lay.n1; ++j) x[i][j] = state.blocks[i][lay.x_col(j)];
    for (int s = 0; s < N; ++s) {
      y[i][s] = VectorXd(lay.n2);
      for (int j = 0; j < lay.n2; ++j)
        y[i][s][j] = state.blocks[i][lay.y_col(s, j)];
    }
  }
  return from_stage_values(instance, aggregation, x, y, QpStatus::Solved, 0);
}

DisasterSolution solution_from_centralized(const DisasterInstance& instance,
                                           Aggregation aggregation,
                                           const CentralizedSolution& sol) {
  return from_stage_values(instance, aggregation, sol.x, sol.y, sol.status, 0);
}

RelaxationMultipliers multipliers_from_direct(const DirectModel& model,
                                              const QpResult& result) {
  RelaxationMultipliers mult;
  const int facilities = model.flow0 - model.alloc0;
  const int N = (model.surplus0 - model.flow0) /
                std::max<int>(1, static_cast<int>(model.arcs.size()));
  mult.budget = std::max(0.0, result.y[model.budget_row]);
  if (model.fairness_row0 >= 0) {
    mult.fairness = VectorXd(facilities);
    for (int i = 0; i < facilities; ++i)
      mult.fairness[i] = std::max(0.0, result.y[model.fairness_row0 + i]);
  }
  mult.flow = MatrixXd(facilities, N);
  for (int s = 0; s < N; ++s)
    for (int i = 0; i < facilities; ++i)
      mult.flow(i, s) = result.y[model.balance_row0 + s * facilities + i];
  return mult;
}

double local_relaxed_subproblem(int location,
                                const RelaxationMultipliers& multipliers,
                                const DisasterInstance& instance,
                                Aggregation aggregation,
                                const QpSettings& settings) {
  instance.validate();
  require(aggregation != Aggregation::LinearScalarization,
          "the per-location relaxation applies to the profile aggregations");
  const int m = instance.network.facilities();
  require(location >= 0 && location < m, "location index out of range");
  const auto& net = instance.network;
  const int N = instance.scenarios;
  const int i = location;
  const int deg = static_cast<int>(net.neighbors[i].size());
  const bool fair = aggregation == Aggregation::Semideviation;
  require(!fair || multipliers.fairness.size() == m,
          "fairness multiplier count mismatch");
  require(multipliers.flow.rows() == m && multipliers.flow.cols() == N,
          "flow multiplier shape mismatch");

  // Columns: r, theta, [fair gap], per scenario (flows, surplus, shortage),
  // per scenario shortfall.
  const int r0 = 0, t0 = 1;
  const int f0 = fair ? 2 : -1;
  const int stage0 = fair ? 3 : 2;
  const int per_s = deg + 2;
  const int v0 = stage0 + N * per_s;
  const int n = v0 + N;
  const double ci = instance.weights.c[i];

  VectorXd q = VectorXd::Zero(n);
  double constant = -multipliers.budget * ci * net.budget;
  q[r0] = net.prealloc_cost[i] + multipliers.budget;
  q[t0] = ci;
  if (fair) {
    q[t0] += multipliers.fairness[i] - ci * multipliers.fairness.sum();
    q[f0] = ci * instance.kappa0 - multipliers.fairness[i];
  }
  for (int s = 0; s < N; ++s) {
    const double delta = multipliers.flow(i, s);
    q[r0] += delta * net.usable_fraction[i];
    constant -= delta * instance.demand(i, s);
    q[stage0 + s * per_s + deg] -= delta;      // surplus
    q[stage0 + s * per_s + deg + 1] += delta;  // shortage
    for (int a = 0; a < deg; ++a)
      q[stage0 + s * per_s + a] =
          multipliers.flow(net.neighbors[i][a], s) - delta;
  }

  RowBlockBuilder rows(n);
  std::vector<LinearExpr> cost(N);
  for (int s = 0; s < N; ++s) {
    for (int a = 0; a < deg; ++a)
      cost[s].add(stage0 + s * per_s + a, net.ship_cost(i, net.neighbors[i][a]));
    cost[s].add(stage0 + s * per_s + deg, net.salvage_cost[i]);
    cost[s].add(stage0 + s * per_s + deg + 1, net.shortage_cost[i]);
  }
  epigraph_reformulation(RiskMeasureSpec::semideviation(instance.kappa_inner[i]))
      .instantiate(instance.prob, cost, t0, v0, rows);
  {
    int row = rows.begin_row(0.0, net.budget);
    rows.coeff(row, r0, 1.0);
  }
  if (fair) {
    // The gap variable is unbounded in the original problem; a roomy cap
    // keeps the relaxed subproblem bounded for badly signed multipliers
    // while still containing every optimal gap value.
    double qmax = 0.0;
    for (int s = 0; s < N; ++s) {
      double worst = net.salvage_cost[i] * surplus_cap(instance, i) +
                     net.shortage_cost[i] * shortage_cap(instance, i);
      for (int a = 0; a < deg; ++a)
        worst += net.ship_cost(i, net.neighbors[i][a]) *
                 net.capacity(i, net.neighbors[i][a]);
      qmax = std::max(qmax, worst);
    }
    int row = rows.begin_row(0.0, (1.0 + instance.kappa0) * qmax + 1.0);
    rows.coeff(row, f0, 1.0);
  }
  for (int s = 0; s < N; ++s) {
    for (int a = 0; a < deg; ++a) {
      int row = rows.begin_row(0.0, net.capacity(i, net.neighbors[i][a]));
      rows.coeff(row, stage0 + s * per_s + a, 1.0);
    }
    int su = rows.begin_row(0.0, surplus_cap(instance, i));
    rows.coeff(su, stage0 + s * per_s + deg, 1.0);
    int sz = rows.begin_row(0.0, shortage_cap(instance, i));
    rows.coeff(sz, stage0 + s * per_s + deg + 1, 1.0);
    int sv = rows.begin_row(0.0, kInf);
    rows.coeff(sv, v0 + s, 1.0);
  }

  QpProblem qp;
  qp.P.resize(n, n);
  qp.q = q;
  qp.A = rows.matrix();
  qp.lower = rows.lower();
  qp.upper = rows.upper();
  QpResult res = solve_convex_qp(qp, settings);
  if (!res.solved())
    throw SolveError("relaxed subproblem did not solve for location " +
                     std::to_string(location));
  return res.objective + constant;
}

namespace {

std::string format_value(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

ReportTables report(const DisasterInstance& instance,
                    const std::vector<std::pair<Aggregation, DisasterSolution>>&
                        solutions) {
  const int m = instance.network.facilities();
  ReportTables out;

  std::ostringstream risk, alloc, text;
  risk << "scenarios,aggregation,converged";
  for (int i = 1; i <= m; ++i) risk << ",theta_" << i;
  risk << ",rho_sys,rho_c\n";
  alloc << "scenarios,aggregation,converged";
  for (int i = 1; i <= m; ++i) alloc << ",r_" << i;
  alloc << ",total\n";

  text << "instance: seed " << instance.seed << ", " << instance.scenarios
       << " scenarios, budget " << format_value(instance.network.budget, 2)
       << "\n\n";
  text << std::left << std::setw(22) << "aggregation";
  for (int i = 1; i <= m; ++i) text << std::right << std::setw(9) << ("theta_" + std::to_string(i));
  text << std::setw(9) << "rho_sys" << std::setw(9) << "rho_c"
       << std::setw(9) << "spread" << "\n";

  for (const auto& [mode, sol] : solutions) {
    const char* flag = sol.converged ? "yes" : "NO";
    risk << instance.scenarios << ',' << to_string(mode) << ',' << flag;
    for (int i = 0; i < m; ++i) risk << ',' << format_value(sol.theta[i]);
    risk << ',' << format_value(sol.total_risk) << ','
         << format_value(sol.rho_c) << '\n';

    alloc << instance.scenarios << ',' << to_string(mode) << ',' << flag;
    for (int i = 0; i < m; ++i) alloc << ',' << format_value(sol.allocation[i]);
    alloc << ',' << format_value(sol.allocation.sum()) << '\n';

    text << std::left << std::setw(22)
         << (std::string(to_string(mode)) + (sol.converged ? "" : " [!]"));
    for (int i = 0; i < m; ++i)
      text << std::right << std::setw(9) << format_value(sol.theta[i], 2);
    text << std::setw(9) << format_value(sol.total_risk, 2) << std::setw(9)
         << format_value(sol.rho_c, 2) << std::setw(9)
         << format_value(sol.theta.maxCoeff() - sol.theta.minCoeff(), 2)
         << "\n";
  }

  text << "\n" << std::left << std::setw(22) << "aggregation";
  for (int i = 1; i <= m; ++i)
    text << std::right << std::setw(9) << ("r_" + std::to_string(i));
  text << std::setw(9) << "total" << "\n";
  for (const auto& [mode, sol] : solutions) {
    text << std::left << std::setw(22)
         << (std::string(to_string(mode)) + (sol.converged ? "" : " [!]"));
    for (int i = 0; i < m; ++i)
      text << std::right << std::setw(9) << format_value(sol.allocation[i], 2);
    text << std::setw(9) << format_value(sol.allocation.sum(), 2) << "\n";
  }

  out.risk_csv = risk.str();
  out.allocation_csv = alloc.str();
  out.text = text.str();
  return out;
}

}  // namespace sysrisk
