#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pirbn/model.hpp"
#include "pirbn/problems.hpp"
#include "pirbn/train.hpp"

namespace pirbn {

enum class ModelType { Pirbn, Fnn };

/// How to build the network(s) of an experiment. Coupled problems get one
/// network per field from the same spec, seeded seed, seed + 1, ...
struct ModelSpec {
  ModelType type = ModelType::Pirbn;
  RbfKind kind = RbfKind::Gaussian;
  CenterGrid centers;
  double b0 = 10.0;
  CenterPlacement placement = CenterPlacement::Uniform;
  double support_cutoff = std::numeric_limits<double>::infinity();
  std::vector<int> widths;  // Fnn layer widths including input and output
};

enum class SweepAxis { B0, SampleCount, LearningRate, RbfKind };

struct SweepSpec {
  SweepAxis axis = SweepAxis::B0;
  std::vector<double> values;       // numeric axes
  std::vector<std::string> kinds;   // rbf kind axis
  std::size_t size() const { return axis == SweepAxis::RbfKind ? kinds.size() : values.size(); }
  std::string label(std::size_t i) const;
};

/// Bound on one scalar metric: min <= value <= max.
struct GateBound {
  std::string metric;
  std::optional<double> min;
  std::optional<double> max;
};

struct GateSpec {
  std::vector<GateBound> bounds;
  int min_passing_runs = -1;  // -1: every run must pass
};

struct ExperimentConfig {
  std::string name;
  ProblemSpec problem;
  ModelSpec model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "runs";
  int jobs = 1;
  std::optional<SweepSpec> sweep;
  std::optional<GateSpec> gate;
};

/// Parse a JSON experiment document. Errors are ConfigError carrying
/// "<origin>:<line>:<column>" for syntax errors and the offending key otherwise.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of a resolved config (stable key order).
std::string config_to_json(const ExperimentConfig& cfg);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

std::vector<Network> build_networks(const ExperimentConfig& cfg, const Problem& problem, std::uint64_t seed);

/// Copy of `cfg` with sweep entry `i` applied.
ExperimentConfig apply_sweep(const ExperimentConfig& cfg, std::size_t i);

struct RunResult {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool diverged = false;
  int diverged_at = -1;
  /// Final scalar metrics: mae, max_abs_error (first field), per-field
  /// variants, initial_mae, mae_ratio, final_L, final_L_g, final_L_b, ...
  std::map<std::string, double> metrics;
  TrainLog log;
  double runtime_seconds = 0.0;
};

/// Train one seed of `cfg` and write every artifact into `dir`.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir);

/// Problem-specific extras for the final fields; UCM adds front/bulk errors
/// relative to the velocity scale.
std::map<std::string, double> field_metrics(const Problem& problem, std::span<const Network> nets,
                                            const Eigen::MatrixXd& grid);

struct GateOutcome {
  bool pass = true;
  int passing_runs = 0;
  int required_runs = 0;
  std::vector<std::string> failures;  // one line per failed bound
};

GateOutcome evaluate_gate(const GateSpec& gate, const std::vector<RunResult>& runs);

struct ExperimentResult {
  std::filesystem::path dir;
  std::vector<RunResult> runs;
  std::optional<GateOutcome> gate;
  bool any_diverged() const;
};

/// Every seed of `cfg` (sweep ignored), plus summary.csv when there are several.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& root);

struct SweepPoint {
  std::string label;
  double value = 0.0;  // NaN on the kind axis
  ExperimentResult result;
  bool diverged = false;
  bool unstable = false;       // final loss more than 100x its running minimum
  bool not_converged = false;  // final MAE >= half the initial MAE
};

struct SweepResult {
  std::filesystem::path dir;
  std::vector<SweepPoint> points;
};

/// One experiment per axis value, aggregated into sweep_summary.csv.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& root);

struct NtkReportRow {
  int iteration = 0;
  Eigen::Index n_g = 0;
  Eigen::Index n_b = 0;
  double diag_dominance = 0.0;
  double drift_from_init = 0.0;
  double relative_drift = 0.0;
  std::vector<double> top_eigenvalues;  // up to 10, descending
};

/// Summarise ntk_<iter>.csv snapshots in `dir` into ntk_report.csv and
/// re-export each normalized K_g as normalized_K_g_<iter>.csv.
/// Throws InvalidInput when the directory holds no snapshot.
std::vector<NtkReportRow> ntk_report(const std::filesystem::path& dir);

/// PIRBN_OUTPUT_ROOT if set, else `fallback`.
std::filesystem::path output_root(const std::string& fallback);

}  // namespace pirbn
