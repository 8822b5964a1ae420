// Command-line driver: instance generation, centralized or distributed
// solves, and the aggregation comparison report.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <optional>
#include <set>
#include <string>

#include "sysrisk/disaster.hpp"
#include "sysrisk/io.hpp"
#include "sysrisk/solver.hpp"

namespace fs = std::filesystem;
using namespace sysrisk;

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitNonConverged = 2;
constexpr int kExitInvalid = 3;
constexpr int kExitInfeasible = 4;

struct RunConfig {
  std::string command;
  std::string instance_path;
  std::uint64_t seed = 1;
  int scenarios = 10;
  double nu1 = 20.0;
  double nu2 = 2.0;
  std::string aggregation = "semideviation";
  std::string method = "distributed";
  double kappa = 0.3;
  double tau = 0.01;
  double tol = 1e-5;
  int max_iter = 20000;
  int cut_period = 25;
  int workers = 0;
  std::string out = ".";
};

// FNV-1a over the serialized instance; stable across platforms.
std::uint64_t digest64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void apply_config_file(RunConfig& cfg, const std::string& path,
                       const std::set<std::string>& overridden) {
  Json j = load_json(path);
  if (j.contains("schema"))
    require(j["schema"].get<std::string>() == "run-config/1",
            "unsupported config schema");
  // Explicit flags win over the file.
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key) && overridden.count(key) == 0)
      field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("instance", cfg.instance_path);
  get("seed", cfg.seed);
  get("scenarios", cfg.scenarios);
  get("nu1", cfg.nu1);
  get("nu2", cfg.nu2);
  get("aggregation", cfg.aggregation);
  get("method", cfg.method);
  get("kappa", cfg.kappa);
  get("tau", cfg.tau);
  get("tol", cfg.tol);
  get("max_iter", cfg.max_iter);
  get("cut_period", cfg.cut_period);
  get("workers", cfg.workers);
  get("out", cfg.out);
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out);
  if (!dir.empty()) fs::create_directories(dir);
  return dir;
}

SolverParams solver_params(const RunConfig& cfg, int agents) {
  SolverParams params;
  params.kappa = cfg.kappa;
  params.tau = cfg.tau;
  params.tolerance = cfg.tol;
  params.dual_tolerance = cfg.tol;
  params.max_iterations = cfg.max_iter;
  params.cut_period = cfg.cut_period;
  params.workers = cfg.workers;
  params.seed = cfg.seed;
  require(params.tau > 0.0 && params.tau < 1.0 / agents,
          "tau must satisfy 0 < tau < 1/m (m = " + std::to_string(agents) +
              " agents); got " + std::to_string(params.tau));
  params.validate(agents);
  return params;
}

Json solution_json(const DisasterInstance& inst, const std::string& method,
                   Aggregation mode, const DisasterSolution& sol) {
  Json j;
  j["schema"] = "disaster-solution/1";
  j["method"] = method;
  j["aggregation"] = to_string(mode);
  j["converged"] = sol.converged;
  j["objective"] = sol.objective;
  j["total_risk"] = sol.total_risk;
  j["rho_c"] = sol.rho_c;
  j["iterations"] = sol.iterations;
  j["allocation"] = vector_to_json(sol.allocation);
  j["theta"] = vector_to_json(sol.theta);
  j["surplus"] = matrix_to_json(sol.surplus);
  j["shortage"] = matrix_to_json(sol.shortage);
  Json flows = Json::array();
  for (int s = 0; s < inst.scenarios; ++s) flows.push_back(matrix_to_json(sol.flows[s]));
  j["flows"] = std::move(flows);
  return j;
}

int cmd_gen(const RunConfig& cfg) {
  require(cfg.scenarios >= 1, "scenario count N must be at least 1");
  DisasterInstance inst =
      generate_instance(cfg.seed, cfg.scenarios, cfg.nu1, cfg.nu2);
  fs::path dir = ensure_out_dir(cfg);
  fs::path file = dir / "instance.json";
  Json j = instance_to_json(inst);
  save_json(j, file.string());
  std::cout << "instance seed=" << cfg.seed << " scenarios=" << cfg.scenarios
            << " demand_digest=" << std::hex << digest64(j.dump()) << std::dec
            << " -> " << file.string() << "\n";
  return kExitConverged;
}

int cmd_solve(const RunConfig& cfg) {
  require(!cfg.instance_path.empty(), "an instance file is required");
  DisasterInstance inst = instance_from_json(load_json(cfg.instance_path));
  Aggregation mode = aggregation_from_string(cfg.aggregation);
  fs::path dir = ensure_out_dir(cfg);

  DisasterSolution sol;
  Json summary;
  summary["schema"] = "solve-summary/1";
  summary["aggregation"] = cfg.aggregation;
  summary["method"] = cfg.method;

  std::ofstream trace_file(dir / "trace.csv");
  if (cfg.method == "centralized") {
    sol = solve_direct(inst, mode);
    if (sol.status == QpStatus::PrimalInfeasible) {
      std::cerr << "infeasible instance: the flow balance and budget rows "
                   "admit no solution\n";
      return kExitInfeasible;
    }
    trace_file << "iter,objective\n";
    summary["iterations"] = sol.iterations;
  } else if (cfg.method == "distributed") {
    require(mode != Aggregation::LinearScalarization,
            "aggregation linear-scalarization has no distributed profile "
            "form; use --method centralized");
    TwoStageSystemProblem problem = to_two_stage(inst, mode);
    SolverParams params = solver_params(cfg, problem.agents);
    ExtendedProblem ext = build_extended(homogenize(problem).problem);
    RunResult run_result = run(ext, params);
    run_result.trace.write_csv(trace_file);
    sol = solution_from_two_stage(inst, mode, run_result.problem,
                                  run_result.primal);
    sol.converged = run_result.converged;
    sol.iterations = run_result.iterations;
    summary["iterations"] = run_result.iterations;
    summary["extended_objective"] = run_result.objective;
    summary["cut_pool"] = run_result.problem.pool.size();
    Json res;
    for (int f = 0; f < kFamilyCount; ++f)
      res[to_string(static_cast<Family>(f))] =
          run_result.final_residuals.norm[f];
    summary["residuals"] = std::move(res);
  } else {
    throw InvalidInput("unknown method: " + cfg.method +
                       " (expected distributed or centralized)");
  }

  summary["converged"] = sol.converged;
  summary["objective"] = sol.objective;
  summary["total_risk"] = sol.total_risk;
  summary["rho_c"] = sol.rho_c;
  save_json(solution_json(inst, cfg.method, mode, sol),
            (dir / "solution.json").string());
  save_json(summary, (dir / "summary.json").string());
  std::cout << (sol.converged ? "converged" : "NOT converged")
            << " objective=" << sol.objective << " total_risk=" << sol.total_risk
            << "\n";
  return sol.converged ? kExitConverged : kExitNonConverged;
}

int cmd_compare(const RunConfig& cfg) {
  require(!cfg.instance_path.empty(), "an instance file is required");
  DisasterInstance inst = instance_from_json(load_json(cfg.instance_path));
  fs::path dir = ensure_out_dir(cfg);

  std::vector<std::pair<Aggregation, DisasterSolution>> solutions;
  bool all_converged = true;
  for (Aggregation mode : {Aggregation::Expectation, Aggregation::Semideviation,
                           Aggregation::LinearScalarization}) {
    DisasterSolution sol;
    if (cfg.method == "distributed" &&
        mode != Aggregation::LinearScalarization) {
      TwoStageSystemProblem problem = to_two_stage(inst, mode);
      SolverParams params = solver_params(cfg, problem.agents);
      RunResult run_result = run(build_extended(homogenize(problem).problem),
                                 params);
      sol = solution_from_two_stage(inst, mode, run_result.problem,
                                    run_result.primal);
      sol.converged = run_result.converged;
      sol.iterations = run_result.iterations;
    } else {
      sol = solve_direct(inst, mode);
    }
    all_converged &= sol.converged;
    solutions.emplace_back(mode, sol);
  }

  ReportTables tables = report(inst, solutions);
  std::ofstream risk(dir / "risk.csv");
  risk << tables.risk_csv;
  std::ofstream alloc(dir / "allocation.csv");
  alloc << tables.allocation_csv;
  std::ofstream text(dir / "report.txt");
  text << tables.text;
  std::cout << tables.text;

  double spread_exp = 0.0, spread_semi = 0.0;
  for (const auto& [mode, sol] : solutions) {
    double spread = sol.theta.maxCoeff() - sol.theta.minCoeff();
    if (mode == Aggregation::Expectation) spread_exp = spread;
    if (mode == Aggregation::Semideviation) spread_semi = spread;
  }
  std::cout << "risk spread: expectation " << spread_exp << ", semideviation "
            << spread_semi << "\n";
  return all_converged ? kExitConverged : kExitNonConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"systemic risk measures and distributed two-stage solves"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", cfg.out, "output directory");
  };
  auto add_solver_flags = [&](CLI::App* sub) {
    sub->add_option("--instance", cfg.instance_path, "instance file");
    sub->add_option("--aggregation", cfg.aggregation,
                    "expectation | semideviation | linear-scalarization");
    sub->add_option("--method", cfg.method, "distributed | centralized");
    sub->add_option("--kappa", cfg.kappa, "augmentation penalty");
    sub->add_option("--tau", cfg.tau, "primal step (must be below 1/m)");
    sub->add_option("--tol", cfg.tol, "residual tolerance");
    sub->add_option("--max-iter", cfg.max_iter, "iteration cap");
    sub->add_option("--cut-period", cfg.cut_period, "iterations between cuts");
    sub->add_option("--workers", cfg.workers,
                    "local solves in parallel (0 = all cores, 1 = serial)");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a seeded instance");
  add_common(gen);
  gen->add_option("--seed", cfg.seed, "generator seed");
  gen->add_option("--scenarios", cfg.scenarios, "scenario count");
  gen->add_option("--nu1", cfg.nu1, "demand scale");
  gen->add_option("--nu2", cfg.nu2, "demand decay");

  CLI::App* solve = app.add_subcommand("solve", "solve one aggregation mode");
  add_common(solve);
  add_solver_flags(solve);

  CLI::App* compare =
      app.add_subcommand("compare", "solve all aggregation modes and report");
  add_common(compare);
  add_solver_flags(compare);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      std::set<std::string> overridden;
      CLI::App* active = app.got_subcommand(gen)     ? gen
                         : app.got_subcommand(solve) ? solve
                                                     : compare;
      for (const CLI::Option* opt : active->get_options())
        if (opt->count() > 0) {
          std::string name = opt->get_name();
          while (!name.empty() && name.front() == '-') name.erase(0, 1);
          std::replace(name.begin(), name.end(), '-', '_');
          overridden.insert(name);
        }
      apply_config_file(cfg, config_path, overridden);
    }
    if (app.got_subcommand(gen)) return cmd_gen(cfg);
    if (app.got_subcommand(solve)) return cmd_solve(cfg);
    if (app.got_subcommand(compare)) return cmd_compare(cfg);
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const SolveError& e) {
    std::cerr << "solve failed: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
