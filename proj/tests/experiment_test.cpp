#include "pirbn/experiment.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pirbn/csv.hpp"
#include "pirbn/error.hpp"
#include "pirbn/oracle.hpp"

namespace pirbn {
namespace {

namespace fs = std::filesystem;

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("pirbn_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTiny = R"({
  "name": "tiny",
  "problem": {"id": "poisson1d", "mu": 1, "resolution": [11]},
  "model": {"type": "pirbn", "kind": "gaussian",
            "centers": {"lower": [-0.1], "upper": [1.1], "count": [13]}, "b0": 8},
  "train": {"learning_rate": 0.01, "iterations": 30, "ntk_snapshot_iters": [0, 30], "metric_every": 10}
})";

const char* kTinyFnn = R"({
  "name": "tiny_fnn",
  "problem": {"id": "poisson1d", "mu": 1, "resolution": [11]},
  "model": {"type": "fnn", "widths": [1, 8, 1]},
  "train": {"learning_rate": 0.01, "optimizer": "gd", "iterations": 300, "ntk_snapshot_iters": [0, 300]}
})";

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ParseConfig, TinyConfigFields) {
  const ExperimentConfig c = parse_config(kTiny);
  EXPECT_EQ(c.name, "tiny");
  EXPECT_EQ(c.problem.kind, ProblemKind::Poisson1D);
  EXPECT_EQ(c.problem.mu, 1.0);
  EXPECT_EQ(c.model.centers.count, std::vector<int>{13});
  EXPECT_EQ(c.model.b0, 8.0);
  EXPECT_EQ(c.train.iterations, 30);
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{0});
  EXPECT_FALSE(c.sweep);
  EXPECT_FALSE(c.gate);
}

TEST(ParseConfig, SyntaxErrorReportsLineAndColumn) {
  const std::string msg = config_error("{\n  \"name\": \"x\",\n  \"problem\": {\"id\": }\n}");
  EXPECT_NE(msg.find("cfg.json:3:"), std::string::npos) << msg;
}

TEST(ParseConfig, UnknownKeyNamesItsPath) {
  std::string text = kTiny;
  text.replace(text.find("\"b0\": 8"), 7, "\"b0\": 8, \"bogus\": 1");
  const std::string msg = config_error(text);
  EXPECT_NE(msg.find("model.bogus"), std::string::npos) << msg;
}

TEST(ParseConfig, WrongTypeAndValueNameTheirKey) {
  std::string t1 = kTiny;
  t1.replace(t1.find("\"iterations\": 30"), 16, "\"iterations\": \"many\"");
  EXPECT_NE(config_error(t1).find("train.iterations"), std::string::npos) << config_error(t1);
  std::string t2 = kTiny;
  t2.replace(t2.find("\"gaussian\""), 10, "\"cubic\"");
  EXPECT_NE(config_error(t2).find("model.kind"), std::string::npos) << config_error(t2);
  std::string t3 = kTiny;
  t3.replace(t3.find("\"learning_rate\": 0.01"), 21, "\"learning_rate\": -1");
  EXPECT_NE(config_error(t3).find("learning_rate"), std::string::npos) << config_error(t3);
}

TEST(ParseConfig, CentreDimensionMustMatchProblem) {
  std::string text = kTiny;
  text.replace(text.find("\"poisson1d\""), 11, "\"wave2d\"");
  text.replace(text.find("\"resolution\": [11]"), 18, "\"resolution\": [5, 5]");
  EXPECT_NE(config_error(text).find("centers"), std::string::npos) << config_error(text);
}

TEST(ParseConfig, SeedRepeatExpands) {
  std::string text = kTiny;
  text.insert(text.rfind('}'), ", \"seed\": 3, \"repeat\": 4");
  EXPECT_EQ(parse_config(text).seeds, (std::vector<std::uint64_t>{3, 4, 5, 6}));
}

TEST(ParseConfig, CanonicalJsonRoundTrips) {
  const ExperimentConfig c = parse_config(kTiny);
  const std::string j = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config(j)), j);
}

TEST(ParseConfig, BundledConfigsParse) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(PIRBN_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 12);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(RunSingle, WritesEveryArtifact) {
  ScratchDir tmp("artifacts");
  const ExperimentConfig cfg = parse_config(kTiny);
  const RunResult r = run_single(cfg, 0, tmp.path());
  for (const char* f : {"loss_history.csv", "metrics_history.csv", "fields.csv", "ntk_0.csv", "ntk_0_meta.json",
                        "ntk_30.csv", "checkpoint_0.json", "checkpoint_30.json", "model_final.json", "metrics.json",
                        "manifest.json"}) {
    EXPECT_TRUE(fs::exists(tmp.path() / f)) << f;
  }
  const CsvTable loss = read_csv(tmp.path() / "loss_history.csv");
  EXPECT_EQ(loss.rows.size(), 31u);
  EXPECT_EQ(loss.rows.back()[loss.column("L_g")], r.metrics.at("final_L_g"));
  const CsvTable hist = read_csv(tmp.path() / "metrics_history.csv");
  EXPECT_EQ(hist.rows.size(), 4u);

  const CsvTable fields = read_csv(tmp.path() / "fields.csv");
  double worst = 0.0;
  for (const auto& row : fields.rows) {
    const double x = row[fields.column("x")];
    const double exact = std::sin(2.0 * M_PI * x);
    EXPECT_NEAR(row[fields.column("u_exact")], exact, 1e-12);
    EXPECT_NEAR(row[fields.column("u_abs_error")], std::abs(row[fields.column("u_pred")] - exact), 1e-12);
    worst = std::max(worst, row[fields.column("u_abs_error")]);
  }
  EXPECT_NEAR(worst, r.metrics.at("max_abs_error"), 1e-12);
  EXPECT_EQ(fields.rows.size(), 110u);

  const std::string manifest = slurp(tmp.path() / "manifest.json");
  EXPECT_NE(manifest.find("config_hash"), std::string::npos);
  EXPECT_NE(manifest.find("runtime_seconds"), std::string::npos);
  const Eigen::MatrixXd K = read_matrix_csv(tmp.path() / "ntk_0.csv");
  EXPECT_EQ(K.rows(), 11 + 2);
}

TEST(RunSingle, ReproducibleForSameSeed) {
  ScratchDir a("repro_a"), b("repro_b");
  const ExperimentConfig cfg = parse_config(kTiny);
  run_single(cfg, 5, a.path());
  run_single(cfg, 5, b.path());
  for (const char* f : {"loss_history.csv", "fields.csv", "metrics.json", "ntk_30.csv", "model_final.json"}) {
    EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
  }
  const std::string ma = slurp(a.path() / "manifest.json"), mb = slurp(b.path() / "manifest.json");
  auto hash = [](const std::string& m) { return m.substr(m.find("config_hash"), 40); };
  EXPECT_EQ(hash(ma), hash(mb));
}

TEST(RunExperiment, SeedsAndGate) {
  ScratchDir tmp("experiment");
  std::string text = kTiny;
  text.insert(text.rfind('}'),
              ", \"seeds\": [0, 1], \"jobs\": 2, \"gate\": {\"bounds\": {\"max_abs_error\": {\"max\": 1e-9}}}");
  const ExperimentResult res = run_experiment(parse_config(text), tmp.path());
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_TRUE(fs::exists(res.dir / "seed_0" / "metrics.json"));
  EXPECT_TRUE(fs::exists(res.dir / "seed_1" / "metrics.json"));
  EXPECT_TRUE(fs::exists(res.dir / "summary.csv"));
  EXPECT_TRUE(fs::exists(res.dir / "gate.json"));
  ASSERT_TRUE(res.gate);
  EXPECT_FALSE(res.gate->pass);
  EXPECT_EQ(res.gate->failures.size(), 2u);
}

TEST(EvaluateGate, CountsPassingRuns) {
  GateSpec g;
  g.bounds = {{"mae", std::nullopt, 1.0}, {"final_L_g", 10.0, std::nullopt}};
  g.min_passing_runs = 2;
  std::vector<RunResult> runs(3);
  runs[0].metrics = {{"mae", 0.5}, {"final_L_g", 20.0}};
  runs[1].metrics = {{"mae", 0.5}, {"final_L_g", 5.0}};
  runs[2].metrics = {{"mae", 0.1}, {"final_L_g", 11.0}};
  GateOutcome o = evaluate_gate(g, runs);
  EXPECT_TRUE(o.pass);
  EXPECT_EQ(o.passing_runs, 2);
  runs[2].diverged = true;
  o = evaluate_gate(g, runs);
  EXPECT_FALSE(o.pass);
  g.bounds.push_back({"missing", 0.0, std::nullopt});
  EXPECT_EQ(evaluate_gate(g, runs).passing_runs, 0);
}

TEST(RunSweep, LearningRateAxisFlagsDivergence) {
  ScratchDir tmp("sweep");
  std::string text = kTinyFnn;
  text.insert(text.rfind('}'), ", \"sweep\": {\"axis\": \"learning_rate\", \"values\": [1e-7, 10]}");
  const SweepResult s = run_sweep(parse_config(text), tmp.path());
  ASSERT_EQ(s.points.size(), 2u);
  EXPECT_EQ(s.points[0].label, "lr_9.9999999999999995e-08");
  EXPECT_FALSE(s.points[0].diverged);
  EXPECT_TRUE(s.points[1].diverged);
  EXPECT_TRUE(s.points[1].unstable);
  std::istringstream summary(slurp(s.dir / "sweep_summary.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(summary, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].substr(0, 17), "label,value,seed,");
  EXPECT_EQ(lines[2].substr(0, 6), "lr_10,");
  EXPECT_TRUE(fs::exists(s.dir / s.points[1].label / "metrics.json"));
  EXPECT_NE(slurp(s.dir / s.points[1].label / "metrics.json").find("diverged_at"), std::string::npos);
}

TEST(ApplySweep, OverridesOneField) {
  std::string text = kTiny;
  text.insert(text.rfind('}'), ", \"sweep\": {\"axis\": \"rbf_kind\", \"values\": [\"gaussian\", \"tps\"]}");
  const ExperimentConfig c = parse_config(text);
  EXPECT_EQ(apply_sweep(c, 1).model.kind, RbfKind::ThinPlateSpline);
  std::string t2 = kTiny;
  t2.insert(t2.rfind('}'), ", \"sweep\": {\"axis\": \"sample_count\", \"values\": [7]}");
  EXPECT_EQ(apply_sweep(parse_config(t2), 0).problem.resolution, std::vector<int>{7});
  std::string t3 = kTiny;
  t3.insert(t3.rfind('}'), ", \"sweep\": {\"axis\": \"b0\", \"values\": [25]}");
  EXPECT_EQ(apply_sweep(parse_config(t3), 0).model.b0, 25.0);
}

TEST(NtkReport, SummarisesSnapshots) {
  ScratchDir tmp("ntk");
  const RunResult r = run_single(parse_config(kTiny), 0, tmp.path());
  const std::vector<NtkReportRow> rows = ntk_report(tmp.path());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].iteration, 0);
  EXPECT_EQ(rows[1].iteration, 30);
  EXPECT_EQ(rows[0].relative_drift, 0.0);
  EXPECT_NEAR(rows[1].diag_dominance, r.log.snapshots[1].diag_dominance, 1e-12);
  EXPECT_NEAR(rows[1].relative_drift, r.log.snapshots[1].relative_drift, 1e-9);
  EXPECT_TRUE(fs::exists(tmp.path() / "ntk_report.csv"));
  const Eigen::MatrixXd nk = read_matrix_csv(tmp.path() / "normalized_K_g_30.csv");
  EXPECT_EQ(nk.rows(), 11);
  EXPECT_LT((nk.diagonal().array() - 1.0).abs().maxCoeff(), 1e-14);
  ScratchDir empty("ntk_empty");
  EXPECT_THROW(ntk_report(empty.path()), InvalidInput);
}

TEST(FieldMetrics, UcmFrontAndBulk) {
  ProblemSpec s;
  s.kind = ProblemKind::UcmPoiseuille;
  s.resolution = {5, 5};
  const Problem p = build_problem(s);
  const std::vector<Network> zero{Fnn({2, 2, 1}), Fnn({2, 2, 1})};
  std::vector<Network> nets = zero;
  for (auto& n : nets) {
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(parameter_count(n));
    set_parameters(n, {z.data(), static_cast<std::size_t>(z.size())});
  }
  const Eigen::MatrixXd grid = tensor_grid(p.lower, p.upper, {21, 41});
  const auto m = field_metrics(p, nets, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    worst = std::max(worst, std::abs(exact_solution(s, std::vector<double>{grid(i, 0), grid(i, 1)})[0]));
  }
  EXPECT_NEAR(m.at("relative_max_error_u"), worst / 0.25, 1e-12);
  EXPECT_GT(m.at("front_mae_relative"), 0.0);
  EXPECT_GT(m.at("bulk_mae_relative"), 0.0);
}

TEST(Csv, RoundTripIsExact) {
  ScratchDir tmp("csv");
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}, {-2.5e-300, 1e300}};
  write_csv(tmp.path() / "t.csv", t);
  const CsvTable back = read_csv(tmp.path() / "t.csv");
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_THROW(back.column("c"), InvalidInput);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Random(3, 4);
  write_matrix_csv(tmp.path() / "m.csv", m);
  EXPECT_EQ(read_matrix_csv(tmp.path() / "m.csv"), m);
  std::ofstream(tmp.path() / "bad.csv") << "a,b\n1,x\n";
  try {
    read_csv(tmp.path() / "bad.csv");
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:2"), std::string::npos) << e.what();
  }
}

TEST(OutputRoot, EnvironmentOverridesFallback) {
  ::unsetenv("PIRBN_OUTPUT_ROOT");
  EXPECT_EQ(output_root("runs"), fs::path("runs"));
  ::setenv("PIRBN_OUTPUT_ROOT", "/tmp/elsewhere", 1);
  EXPECT_EQ(output_root("runs"), fs::path("/tmp/elsewhere"));
  ::unsetenv("PIRBN_OUTPUT_ROOT");
}

}  // namespace
}  // namespace pirbn
