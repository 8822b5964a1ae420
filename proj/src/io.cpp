#include "sysrisk/io.hpp"

#include <fstream>

namespace sysrisk {

namespace {

Json bound_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

double bound_from_json(const Json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw InvalidInput("unrecognized bound value: " + s);
  }
  return j.get<double>();
}

Json bounds_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(bound_to_json(v[i]));
  return out;
}

VectorXd bounds_from_json(const Json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<int>(i)] = bound_from_json(j[i]);
  return v;
}

Json local_set_to_json(const LocalSet& set) {
  Json out;
  out["lower"] = bounds_to_json(set.lower);
  out["upper"] = bounds_to_json(set.upper);
  if (set.rows.rows() > 0) {
    out["rows"] = matrix_to_json(set.rows);
    out["row_lower"] = bounds_to_json(set.row_lower);
    out["row_upper"] = bounds_to_json(set.row_upper);
  }
  return out;
}

LocalSet local_set_from_json(const Json& j) {
  LocalSet set;
  set.lower = bounds_from_json(j.at("lower"));
  set.upper = bounds_from_json(j.at("upper"));
  if (j.contains("rows")) {
    set.rows = matrix_from_json(j.at("rows"));
    set.row_lower = bounds_from_json(j.at("row_lower"));
    set.row_upper = bounds_from_json(j.at("row_upper"));
  } else {
    set.rows.resize(0, set.lower.size());
    set.row_lower.resize(0);
    set.row_upper.resize(0);
  }
  set.validate();
  return set;
}

}  // namespace

Json vector_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

VectorXd vector_from_json(const Json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

Json matrix_to_json(const MatrixXd& M) {
  Json out = Json::array();
  for (int r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

MatrixXd matrix_from_json(const Json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    require(static_cast<int>(j[r].size()) == cols, "ragged matrix rows");
    for (int c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

Json risk_spec_to_json(const RiskMeasureSpec& spec) {
  Json out;
  out["kind"] = to_string(spec.kind);
  if (spec.kind == RiskKind::AverageValueAtRisk) out["alpha"] = spec.alpha;
  if (spec.kind == RiskKind::MeanUpperSemideviation) out["kappa"] = spec.kappa;
  return out;
}

RiskMeasureSpec risk_spec_from_json(const Json& j) {
  RiskMeasureSpec spec;
  spec.kind = risk_kind_from_string(j.at("kind").get<std::string>());
  if (spec.kind == RiskKind::AverageValueAtRisk)
    spec.alpha = j.at("alpha").get<double>();
  if (spec.kind == RiskKind::MeanUpperSemideviation)
    spec.kappa = j.at("kappa").get<double>();
  spec.validate();
  return spec;
}

Json systemic_spec_to_json(const SystemicMeasureSpec& spec) {
  Json out;
  out["outer"] = risk_spec_to_json(spec.outer);
  Json inner = Json::array();
  for (const auto& s : spec.inner) inner.push_back(risk_spec_to_json(s));
  out["inner"] = std::move(inner);
  out["weights"] = vector_to_json(spec.weights.c);
  return out;
}

SystemicMeasureSpec systemic_spec_from_json(const Json& j) {
  SystemicMeasureSpec spec;
  spec.outer = risk_spec_from_json(j.at("outer"));
  for (const auto& s : j.at("inner")) spec.inner.push_back(risk_spec_from_json(s));
  spec.weights = ScalarizationWeights(vector_from_json(j.at("weights")));
  spec.validate();
  return spec;
}

Json problem_to_json(const TwoStageSystemProblem& problem) {
  problem.validate();
  Json out;
  out["schema"] = "two-stage-problem/1";
  out["agents"] = problem.agents;
  out["scenarios"] = problem.scenarios;
  out["prob"] = vector_to_json(problem.prob.p);
  out["coupling_rhs"] = vector_to_json(problem.coupling_rhs);
  out["systemic_dim"] = problem.systemic_dim;
  Json agents = Json::array();
  for (int i = 0; i < problem.agents; ++i) {
    const auto& fs = problem.first_stage[i];
    Json a;
    a["cost"] = vector_to_json(fs.cost);
    a["cost_offset"] = fs.cost_offset;
    a["set"] = local_set_to_json(fs.set);
    a["coupling_matrix"] = matrix_to_json(fs.coupling);
    Json stages = Json::array();
    for (int s = 0; s < problem.scenarios; ++s) {
      const auto& ss = problem.second_stage[i][s];
      Json stage;
      stage["cost"] = vector_to_json(ss.cost);
      stage["tech_matrix"] = matrix_to_json(ss.tech);
      stage["recourse_matrix"] = matrix_to_json(ss.recourse);
      stage["offset"] = vector_to_json(ss.offset);
      stage["set"] = local_set_to_json(ss.set);
      if (ss.link_rows() > 0) {
        stage["link_tech"] = matrix_to_json(ss.link_tech);
        stage["link_recourse"] = matrix_to_json(ss.link_recourse);
        stage["link_lower"] = bounds_to_json(ss.link_lower);
        stage["link_upper"] = bounds_to_json(ss.link_upper);
      }
      stages.push_back(std::move(stage));
    }
    a["second_stage"] = std::move(stages);
    agents.push_back(std::move(a));
  }
  out["agent_blocks"] = std::move(agents);
  if (problem.systemic_dim > 0) {
    Json sys = Json::array();
    for (const auto& st : problem.systemic) {
      Json stage;
      stage["matrix"] = matrix_to_json(st.coupling);
      stage["cost"] = vector_to_json(st.cost);
      stage["set"] = local_set_to_json(st.set);
      sys.push_back(std::move(stage));
    }
    out["systemic"] = std::move(sys);
  }
  out["risk"] = systemic_spec_to_json(problem.risk);
  return out;
}

TwoStageSystemProblem problem_from_json(const Json& j) {
  require(j.at("schema").get<std::string>() == "two-stage-problem/1",
          "unsupported problem schema");
  TwoStageSystemProblem p;
  p.agents = j.at("agents").get<int>();
  p.scenarios = j.at("scenarios").get<int>();
  p.prob = ProbabilityVector(vector_from_json(j.at("prob")));
  p.coupling_rhs = vector_from_json(j.at("coupling_rhs"));
  p.systemic_dim = j.at("systemic_dim").get<int>();
  for (const auto& a : j.at("agent_blocks")) {
    AgentFirstStage fs;
    fs.cost = vector_from_json(a.at("cost"));
    fs.cost_offset = a.at("cost_offset").get<double>();
    fs.set = local_set_from_json(a.at("set"));
    fs.coupling = matrix_from_json(a.at("coupling_matrix"));
    if (fs.coupling.rows() == 0) fs.coupling.resize(0, fs.set.dim());
    p.first_stage.push_back(std::move(fs));
    std::vector<AgentSecondStage> stages;
    for (const auto& sj : a.at("second_stage")) {
      AgentSecondStage ss;
      ss.cost = vector_from_json(sj.at("cost"));
      ss.tech = matrix_from_json(sj.at("tech_matrix"));
      ss.recourse = matrix_from_json(sj.at("recourse_matrix"));
      ss.offset = vector_from_json(sj.at("offset"));
      ss.set = local_set_from_json(sj.at("set"));
      const int n1 = static_cast<int>(ss.tech.cols());
      const int n2 = ss.set.dim();
      if (ss.tech.rows() == 0) ss.tech.resize(0, n1);
      if (ss.recourse.rows() == 0) ss.recourse.resize(0, n2);
      if (sj.contains("link_tech")) {
        ss.link_tech = matrix_from_json(sj.at("link_tech"));
        ss.link_recourse = matrix_from_json(sj.at("link_recourse"));
        ss.link_lower = bounds_from_json(sj.at("link_lower"));
        ss.link_upper = bounds_from_json(sj.at("link_upper"));
      } else {
        ss.link_tech.resize(0, n1);
        ss.link_recourse.resize(0, n2);
        ss.link_lower.resize(0);
        ss.link_upper.resize(0);
      }
      stages.push_back(std::move(ss));
    }
    p.second_stage.push_back(std::move(stages));
  }
  if (p.systemic_dim > 0) {
    for (const auto& sj : j.at("systemic")) {
      SystemicStage st;
      st.coupling = matrix_from_json(sj.at("matrix"));
      st.cost = vector_from_json(sj.at("cost"));
      st.set = local_set_from_json(sj.at("set"));
      p.systemic.push_back(std::move(st));
    }
  }
  p.risk = systemic_spec_from_json(j.at("risk"));
  // Zero-row matrices may deserialize with unknown widths; normalize.
  const int d1 = static_cast<int>(p.coupling_rhs.size());
  const int d2 = p.dynamics_rows();
  for (int i = 0; i < p.agents; ++i) {
    if (p.first_stage[i].coupling.rows() != d1 && d1 == 0)
      p.first_stage[i].coupling.resize(0, p.first_stage[i].set.dim());
    for (auto& ss : p.second_stage[i])
      if (ss.tech.rows() != d2 && d2 == 0) {
        ss.tech.resize(0, p.first_stage[i].set.dim());
        ss.recourse.resize(0, ss.set.dim());
        ss.offset.resize(0);
      }
  }
  p.validate();
  return p;
}

Json instance_to_json(const DisasterInstance& instance) {
  instance.validate();
  Json out;
  out["schema"] = "disaster-instance/1";
  out["seed"] = instance.seed;
  out["scenarios"] = instance.scenarios;
  out["nu1"] = instance.nu1;
  out["nu2"] = instance.nu2;
  Json net;
  net["coordinates"] = matrix_to_json(instance.network.coordinates);
  Json nb = Json::array();
  for (const auto& lst : instance.network.neighbors) nb.push_back(lst);
  net["neighbors"] = std::move(nb);
  net["prealloc_cost"] = vector_to_json(instance.network.prealloc_cost);
  net["salvage_cost"] = vector_to_json(instance.network.salvage_cost);
  net["shortage_cost"] = vector_to_json(instance.network.shortage_cost);
  net["ship_cost"] = matrix_to_json(instance.network.ship_cost);
  net["capacity"] = matrix_to_json(instance.network.capacity);
  net["usable_fraction"] = vector_to_json(instance.network.usable_fraction);
  net["budget"] = instance.network.budget;
  out["network"] = std::move(net);
  out["epicenters"] = matrix_to_json(instance.epicenters);
  out["demand"] = matrix_to_json(instance.demand);
  out["prob"] = vector_to_json(instance.prob.p);
  out["kappa0"] = instance.kappa0;
  out["kappa_inner"] = vector_to_json(instance.kappa_inner);
  out["weights"] = vector_to_json(instance.weights.c);
  return out;
}

DisasterInstance instance_from_json(const Json& j) {
  require(j.at("schema").get<std::string>() == "disaster-instance/1",
          "unsupported instance schema");
  DisasterInstance inst;
  inst.seed = j.at("seed").get<std::uint64_t>();
  inst.scenarios = j.at("scenarios").get<int>();
  inst.nu1 = j.at("nu1").get<double>();
  inst.nu2 = j.at("nu2").get<double>();
  const Json& net = j.at("network");
  inst.network.coordinates = matrix_from_json(net.at("coordinates"));
  for (const auto& lst : net.at("neighbors"))
    inst.network.neighbors.push_back(lst.get<std::vector<int>>());
  inst.network.prealloc_cost = vector_from_json(net.at("prealloc_cost"));
  inst.network.salvage_cost = vector_from_json(net.at("salvage_cost"));
  inst.network.shortage_cost = vector_from_json(net.at("shortage_cost"));
  inst.network.ship_cost = matrix_from_json(net.at("ship_cost"));
  inst.network.capacity = matrix_from_json(net.at("capacity"));
  inst.network.usable_fraction = vector_from_json(net.at("usable_fraction"));
  inst.network.budget = net.at("budget").get<double>();
  inst.epicenters = matrix_from_json(j.at("epicenters"));
  inst.demand = matrix_from_json(j.at("demand"));
  inst.prob = ProbabilityVector(vector_from_json(j.at("prob")));
  inst.kappa0 = j.at("kappa0").get<double>();
  inst.kappa_inner = vector_from_json(j.at("kappa_inner"));
  inst.weights = ScalarizationWeights(vector_from_json(j.at("weights")));
  inst.validate();
  return inst;
}

void save_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read file: " + path);
  Json j;
  in >> j;
  return j;
}

}  // namespace sysrisk
