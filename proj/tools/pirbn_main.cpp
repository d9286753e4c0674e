#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "pirbn/csv.hpp"
#include "pirbn/error.hpp"
#include "pirbn/experiment.hpp"
#include "pirbn/oracle.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitGate = 4;

using pirbn::format_double;

void print_run(const pirbn::RunResult& r) {
  std::cout << r.dir.string() << ": seed " << r.seed;
  if (r.diverged) {
    std::cout << " DIVERGED at iteration " << r.diverged_at << '\n';
    return;
  }
  std::cout << " mae " << format_double(r.metrics.at("mae")) << " max_abs_error "
            << format_double(r.metrics.at("max_abs_error")) << " L_g " << format_double(r.metrics.at("final_L_g"))
            << " L_b " << format_double(r.metrics.at("final_L_b")) << " (" << format_double(r.runtime_seconds)
            << " s)\n";
}

int report_gate(const std::optional<pirbn::GateOutcome>& gate, bool requested) {
  if (!requested) return kExitOk;
  if (!gate) {
    std::cerr << "--gate given but the config has no \"gate\" section\n";
    return kExitConfig;
  }
  std::cout << "gate: " << (gate->pass ? "PASS" : "FAIL") << " (" << gate->passing_runs << " of "
            << gate->required_runs << " required runs pass)\n";
  for (const auto& f : gate->failures) std::cout << "  " << f << '\n';
  return gate->pass ? kExitOk : kExitGate;
}

std::filesystem::path resolve_root(const std::string& flag, const pirbn::ExperimentConfig& cfg) {
  return flag.empty() ? pirbn::output_root(cfg.output_dir) : std::filesystem::path(flag);
}

int cmd_run(const std::string& path, const std::string& out, int jobs, bool gate) {
  pirbn::ExperimentConfig cfg = pirbn::load_config(path);
  if (jobs > 0) cfg.jobs = jobs;
  const pirbn::ExperimentResult res = pirbn::run_experiment(cfg, resolve_root(out, cfg));
  for (const auto& r : res.runs) print_run(r);
  const int g = report_gate(res.gate, gate);
  if (res.any_diverged()) return kExitDiverged;
  return g;
}

int cmd_sweep(const std::string& path, const std::string& out, int jobs, bool gate) {
  pirbn::ExperimentConfig cfg = pirbn::load_config(path);
  if (jobs > 0) cfg.jobs = jobs;
  const pirbn::SweepResult res = pirbn::run_sweep(cfg, resolve_root(out, cfg));
  int status = kExitOk;
  for (const auto& p : res.points) {
    std::cout << p.label << ":" << (p.diverged ? " diverged" : "") << (p.unstable ? " unstable" : "")
              << (p.not_converged ? " not-converged" : "") << '\n';
    for (const auto& r : p.result.runs) print_run(r);
    const int g = report_gate(p.result.gate, gate);
    if (g != kExitOk) status = g;
  }
  std::cout << "summary: " << (res.dir / "sweep_summary.csv").string() << '\n';
  return status;
}

int cmd_ntk_report(const std::string& dir) {
  const auto rows = pirbn::ntk_report(dir);
  std::cout << "iteration  diag_dominance  relative_drift  lambda_1\n";
  for (const auto& r : rows) {
    std::printf("%9d  %14.6g  %14.6g  %.6g\n", r.iteration, r.diag_dominance, r.relative_drift,
                r.top_eigenvalues.empty() ? 0.0 : r.top_eigenvalues.front());
  }
  std::cout << "wrote " << (std::filesystem::path(dir) / "ntk_report.csv").string() << '\n';
  return kExitOk;
}

int cmd_oracle_check(const std::string& problem) {
  std::vector<pirbn::ProblemSpec> specs;
  if (problem.empty()) {
    for (auto kind : {pirbn::ProblemKind::Poisson1D, pirbn::ProblemKind::MixedFreq1D, pirbn::ProblemKind::Spring1D,
                      pirbn::ProblemKind::Wave2D, pirbn::ProblemKind::Diffusion2D,
                      pirbn::ProblemKind::UcmPoiseuille}) {
      pirbn::ProblemSpec s;
      s.kind = kind;
      specs.push_back(s);
    }
  } else {
    pirbn::ProblemSpec s;
    try {
      s.kind = pirbn::problem_kind_from_string(problem);
    } catch (const pirbn::Error& e) {
      throw pirbn::ConfigError(e.what());
    }
    specs.push_back(s);
  }
  bool all = true;
  for (const auto& s : specs) {
    const pirbn::SelfCheckReport r = pirbn::oracle_selfcheck(s);
    all = all && r.pass;
    std::printf("%-15s %s  max residual %.3e  scale %.3e  tol %.0e  (%d points, worst in %s)\n", r.problem.c_str(),
                r.pass ? "PASS" : "FAIL", r.max_residual, r.scale, r.tolerance, r.points_checked,
                r.worst_operator.c_str());
  }
  return all ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed RBF and tanh network solvers with NTK diagnostics"};
  app.require_subcommand(1);

  std::string config, out, dir, problem;
  int jobs = 0;
  bool gate = false;

  auto* run = app.add_subcommand("run", "Train every seed of an experiment config and write artifacts");
  run->add_option("config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", out, "output root (default: $PIRBN_OUTPUT_ROOT, then the config's output_dir)");
  run->add_option("-j,--jobs", jobs, "concurrent runs (overrides the config)")->check(CLI::PositiveNumber);
  run->add_flag("--gate", gate, "exit 4 unless the config's gate passes");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of the config's sweep axis");
  sweep->add_option("config", config, "experiment JSON with a sweep section")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--output", out, "output root");
  sweep->add_option("-j,--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);
  sweep->add_flag("--gate", gate, "exit 4 unless every sweep point passes the gate");

  auto* ntk = app.add_subcommand("ntk-report", "Summarise the NTK snapshots of a run directory");
  ntk->add_option("dir", dir, "run artifact directory")->required()->check(CLI::ExistingDirectory);

  auto* oracle = app.add_subcommand("oracle-check", "Check exact solutions against their PDEs by finite differences");
  oracle->add_option("problem", problem, "problem id (default: all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out, jobs, gate);
    if (*sweep) return cmd_sweep(config, out, jobs, gate);
    if (*ntk) return cmd_ntk_report(dir);
    if (*oracle) return cmd_oracle_check(problem);
  } catch (const pirbn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
