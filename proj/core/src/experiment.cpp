#include "pirbn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <regex>
#include <sstream>
#include <thread>

#include "pirbn/csv.hpp"
#include "pirbn/error.hpp"
#include "pirbn/ntk.hpp"
#include "pirbn/oracle.hpp"

#ifndef PIRBN_VERSION
#define PIRBN_VERSION "unknown"
#endif

namespace pirbn {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config parsing ----------------------------------------------------------

namespace {

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

/// Typed access to one JSON object that reports the dotted key path on error.
class Section {
 public:
  Section(const json& j, std::string path, std::string origin)
      : j_(j), path_(std::move(path)), origin_(std::move(origin)) {
    if (!j_.is_object()) fail(path_.empty() ? "document" : path_, "expected an object");
  }

  /// Reject keys nobody asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) fail(key(it.key()), "unknown key");
    }
  }

  const std::string& origin() const { return origin_; }

  bool has(const std::string& k) {
    seen_.push_back(k);
    return j_.contains(k);
  }

  const json& raw(const std::string& k) {
    if (!has(k)) fail(key(k), "missing required key");
    return j_.at(k);
  }

  double number(const std::string& k, std::optional<double> fallback = std::nullopt) {
    if (!has(k)) return require(k, fallback);
    const json& v = j_.at(k);
    if (v.is_string() && (v == "inf" || v == "infinity")) return std::numeric_limits<double>::infinity();
    if (!v.is_number()) fail(key(k), "expected a number");
    return v.get<double>();
  }

  long integer(const std::string& k, std::optional<long> fallback = std::nullopt) {
    if (!has(k)) return require(k, fallback);
    const json& v = j_.at(k);
    if (!v.is_number_integer()) fail(key(k), "expected an integer");
    return v.get<long>();
  }

  bool boolean(const std::string& k, std::optional<bool> fallback = std::nullopt) {
    if (!has(k)) return require(k, fallback);
    const json& v = j_.at(k);
    if (!v.is_boolean()) fail(key(k), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& k, std::optional<std::string> fallback = std::nullopt) {
    if (!has(k)) return require(k, fallback);
    const json& v = j_.at(k);
    if (!v.is_string()) fail(key(k), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& k, std::optional<std::vector<double>> fallback = std::nullopt) {
    if (!has(k)) return require(k, fallback);
    const json& v = j_.at(k);
    if (!v.is_array()) fail(key(k), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key(k), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& k, std::optional<std::vector<int>> fallback = std::nullopt) {
    if (!has(k)) return require(k, fallback);
    const json& v = j_.at(k);
    if (!v.is_array()) fail(key(k), "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) fail(key(k), "expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_array()) fail(key(k), "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) fail(key(k), "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  Section child(const std::string& k) { return Section(raw(k), key(k), origin_); }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    throw ConfigError(origin_ + ": " + where + ": " + what);
  }

  template <class F>
  auto guarded(const std::string& k, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail(key(k), e.what());
    }
  }

 private:
  template <class T>
  T require(const std::string& k, const std::optional<T>& fallback) const {
    if (!fallback) fail(key(k), "missing required key");
    return *fallback;
  }

  const json& j_;
  std::string path_;
  std::string origin_;
  std::vector<std::string> seen_;
};

ProblemSpec parse_problem(Section s) {
  ProblemSpec p;
  const std::string id = s.string("id");
  p.kind = s.guarded("id", [&] { return problem_kind_from_string(id); });
  p.mu = s.number("mu", 4.0);
  p.shift = s.number("shift", 0.0);
  p.resolution = s.integers("resolution", std::vector<int>{});
  for (int r : p.resolution) {
    if (r < 1) s.fail(s.key("resolution"), "every axis needs at least one point");
  }
  s.finish();
  return p;
}

ModelSpec parse_model(Section s) {
  ModelSpec m;
  const std::string type = s.string("type");
  if (type == "pirbn") {
    m.type = ModelType::Pirbn;
    const std::string kind = s.string("kind", "gaussian");
    m.kind = s.guarded("kind", [&] { return rbf_kind_from_string(kind); });
    Section c = s.child("centers");
    m.centers.lower = c.numbers("lower");
    m.centers.upper = c.numbers("upper");
    m.centers.count = c.integers("count");
    c.finish();
    if (m.centers.lower.size() != m.centers.upper.size() || m.centers.lower.size() != m.centers.count.size() ||
        m.centers.lower.empty()) {
      s.fail(s.key("centers"), "lower, upper and count must have the same nonzero length");
    }
    for (int n : m.centers.count) {
      if (n < 1) s.fail(s.key("centers.count"), "every axis needs at least one centre");
    }
    m.b0 = s.number("b0", 10.0);
    if (!(m.b0 > 0.0) || !std::isfinite(m.b0)) s.fail(s.key("b0"), "must be a positive number");
    const std::string placement = s.string("placement", "uniform");
    if (placement == "uniform") {
      m.placement = CenterPlacement::Uniform;
    } else if (placement == "random") {
      m.placement = CenterPlacement::Random;
    } else {
      s.fail(s.key("placement"), "expected \"uniform\" or \"random\"");
    }
    m.support_cutoff = s.number("support_cutoff", std::numeric_limits<double>::infinity());
    if (!(m.support_cutoff > 0.0)) s.fail(s.key("support_cutoff"), "must be positive");
  } else if (type == "fnn") {
    m.type = ModelType::Fnn;
    m.widths = s.integers("widths");
    if (m.widths.size() < 3) s.fail(s.key("widths"), "need input, at least one hidden layer and output");
    for (int w : m.widths) {
      if (w < 1) s.fail(s.key("widths"), "layer widths must be positive");
    }
  } else {
    s.fail(s.key("type"), "expected \"pirbn\" or \"fnn\"");
  }
  s.finish();
  return m;
}

TrainConfig parse_train(Section s) {
  TrainConfig t;
  t.learning_rate = s.number("learning_rate", t.learning_rate);
  t.iterations = static_cast<int>(s.integer("iterations", t.iterations));
  const std::string opt = s.string("optimizer", "adam");
  if (opt == "adam") {
    t.optimizer = Optimizer::Adam;
  } else if (opt == "gd" || opt == "gradient_descent") {
    t.optimizer = Optimizer::GradientDescent;
  } else {
    s.fail(s.key("optimizer"), "expected \"adam\" or \"gd\"");
  }
  t.beta1 = s.number("beta1", t.beta1);
  t.beta2 = s.number("beta2", t.beta2);
  t.epsilon = s.number("epsilon", t.epsilon);
  t.ntk_snapshot_iters = s.integers("ntk_snapshot_iters", t.ntk_snapshot_iters);
  t.adaptive_weights = s.boolean("adaptive_weights", t.adaptive_weights);
  t.weight_update_period = static_cast<int>(s.integer("weight_update_period", t.weight_update_period));
  t.sqrt_width_amplitude_lr = s.boolean("sqrt_width_amplitude_lr", t.sqrt_width_amplitude_lr);
  t.metric_every = static_cast<int>(s.integer("metric_every", t.metric_every));
  t.metric_grid = s.integers("metric_grid", std::vector<int>{});
  s.guarded("learning_rate", [&] { t.validate(); });
  s.finish();
  return t;
}

SweepSpec parse_sweep(Section s) {
  SweepSpec w;
  const std::string axis = s.string("axis");
  if (axis == "b0") {
    w.axis = SweepAxis::B0;
  } else if (axis == "sample_count") {
    w.axis = SweepAxis::SampleCount;
  } else if (axis == "learning_rate") {
    w.axis = SweepAxis::LearningRate;
  } else if (axis == "rbf_kind") {
    w.axis = SweepAxis::RbfKind;
  } else {
    s.fail(s.key("axis"), "expected one of b0, sample_count, learning_rate, rbf_kind");
  }
  if (w.axis == SweepAxis::RbfKind) {
    w.kinds = s.strings("values");
    for (const auto& k : w.kinds) s.guarded("values", [&] { return rbf_kind_from_string(k); });
  } else {
    w.values = s.numbers("values");
    for (double v : w.values) {
      if (!(v > 0.0) || !std::isfinite(v)) s.fail(s.key("values"), "axis values must be positive");
      if (w.axis == SweepAxis::SampleCount && v != std::floor(v)) s.fail(s.key("values"), "sample counts must be integers");
    }
  }
  if (w.size() == 0) s.fail(s.key("values"), "need at least one value");
  s.finish();
  return w;
}

GateSpec parse_gate(Section s) {
  GateSpec g;
  g.min_passing_runs = static_cast<int>(s.integer("min_passing_runs", -1));
  const json& bounds = s.raw("bounds");
  if (!bounds.is_object()) s.fail(s.key("bounds"), "expected an object of metric bounds");
  for (auto it = bounds.begin(); it != bounds.end(); ++it) {
    Section m(it.value(), s.key("bounds." + it.key()), s.origin());
    GateBound gb;
    gb.metric = it.key();
    if (m.has("min")) gb.min = m.number("min");
    if (m.has("max")) gb.max = m.number("max");
    if (!gb.min && !gb.max) m.fail(m.key("min"), "a bound needs min or max");
    m.finish();
    g.bounds.push_back(gb);
  }
  s.finish();
  return g;
}

}  // namespace

std::string SweepSpec::label(std::size_t i) const {
  switch (axis) {
    case SweepAxis::B0:
      return "b0_" + format_double(values[i]);
    case SweepAxis::SampleCount:
      return "n_" + std::to_string(static_cast<long>(values[i]));
    case SweepAxis::LearningRate:
      return "lr_" + format_double(values[i]);
    case SweepAxis::RbfKind:
      return "kind_" + kinds[i];
  }
  return {};
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + line_column(text, e.byte == 0 ? 0 : e.byte - 1) + ": JSON syntax error: " +
                      e.what());
  }
  ExperimentConfig cfg;
  Section root(doc, "", origin);
  cfg.name = root.string("name");
  if (cfg.name.empty() || cfg.name.find_first_of("/\\") != std::string::npos) {
    root.fail("name", "must be a nonempty name without path separators");
  }
  cfg.problem = parse_problem(root.child("problem"));
  cfg.model = parse_model(root.child("model"));
  cfg.train = root.has("train") ? parse_train(root.child("train")) : TrainConfig{};
  if (root.has("seeds")) {
    cfg.seeds.clear();
    for (int s : root.integers("seeds")) {
      if (s < 0) root.fail("seeds", "seeds must be nonnegative");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (cfg.seeds.empty()) root.fail("seeds", "need at least one seed");
  } else {
    const long first = root.integer("seed", 0);
    const long repeat = root.integer("repeat", 1);
    if (first < 0 || repeat < 1) root.fail("repeat", "need seed >= 0 and repeat >= 1");
    cfg.seeds.clear();
    for (long i = 0; i < repeat; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(first + i));
  }
  cfg.output_dir = root.string("output_dir", "runs");
  cfg.jobs = static_cast<int>(root.integer("jobs", 1));
  if (cfg.jobs < 1) root.fail("jobs", "must be >= 1");
  if (root.has("sweep")) cfg.sweep = parse_sweep(root.child("sweep"));
  if (root.has("gate")) cfg.gate = parse_gate(root.child("gate"));
  root.finish();

  // Shape checks that need both the problem and the model.
  const Problem problem = root.guarded("problem", [&] { return build_problem(cfg.problem); });
  if (cfg.model.type == ModelType::Pirbn && cfg.model.centers.dim() != problem.dim) {
    root.fail("model.centers", "dimension differs from the problem's " + std::to_string(problem.dim));
  }
  if (cfg.model.type == ModelType::Fnn && (cfg.model.widths.front() != problem.dim || cfg.model.widths.back() != 1)) {
    root.fail("model.widths", "input width must equal the problem dimension and output width must be 1");
  }
  if (!cfg.train.metric_grid.empty() && static_cast<int>(cfg.train.metric_grid.size()) != problem.dim) {
    root.fail("train.metric_grid", "needs one count per problem axis");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

namespace {

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return nullptr;
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  json p;
  p["id"] = std::string(to_string(cfg.problem.kind));
  p["mu"] = cfg.problem.mu;
  p["shift"] = cfg.problem.shift;
  p["resolution"] = cfg.problem.resolution;
  j["problem"] = p;
  json m;
  if (cfg.model.type == ModelType::Pirbn) {
    m["type"] = "pirbn";
    m["kind"] = std::string(to_string(cfg.model.kind));
    m["centers"] = {{"lower", cfg.model.centers.lower},
                    {"upper", cfg.model.centers.upper},
                    {"count", cfg.model.centers.count}};
    m["b0"] = cfg.model.b0;
    m["placement"] = cfg.model.placement == CenterPlacement::Uniform ? "uniform" : "random";
    m["support_cutoff"] = finite_or_string(cfg.model.support_cutoff);
  } else {
    m["type"] = "fnn";
    m["widths"] = cfg.model.widths;
  }
  j["model"] = m;
  const TrainConfig& t = cfg.train;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"iterations", t.iterations},
                {"optimizer", t.optimizer == Optimizer::Adam ? "adam" : "gd"},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"ntk_snapshot_iters", t.ntk_snapshot_iters},
                {"adaptive_weights", t.adaptive_weights},
                {"weight_update_period", t.weight_update_period},
                {"sqrt_width_amplitude_lr", t.sqrt_width_amplitude_lr},
                {"metric_every", t.metric_every},
                {"metric_grid", t.metric_grid}};
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  j["jobs"] = cfg.jobs;
  if (cfg.sweep) {
    const SweepSpec& w = *cfg.sweep;
    static const char* axes[] = {"b0", "sample_count", "learning_rate", "rbf_kind"};
    j["sweep"]["axis"] = axes[static_cast<int>(w.axis)];
    if (w.axis == SweepAxis::RbfKind) {
      j["sweep"]["values"] = w.kinds;
    } else {
      j["sweep"]["values"] = w.values;
    }
  }
  if (cfg.gate) {
    json b = json::object();
    for (const auto& gb : cfg.gate->bounds) {
      json e = json::object();
      if (gb.min) e["min"] = *gb.min;
      if (gb.max) e["max"] = *gb.max;
      b[gb.metric] = e;
    }
    j["gate"] = {{"bounds", b}, {"min_passing_runs", cfg.gate->min_passing_runs}};
  }
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(1); }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Network> build_networks(const ExperimentConfig& cfg, const Problem& problem, std::uint64_t seed) {
  std::vector<Network> nets;
  for (int k = 0; k < problem.n_nets; ++k) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
    if (cfg.model.type == ModelType::Pirbn) {
      Pirbn p = init_pirbn(cfg.model.kind, cfg.model.centers, cfg.model.b0, s, cfg.model.placement);
      if (std::isfinite(cfg.model.support_cutoff)) p.set_support_cutoff(cfg.model.support_cutoff);
      nets.emplace_back(std::move(p));
    } else {
      nets.emplace_back(init_fnn(cfg.model.widths, s));
    }
  }
  return nets;
}

ExperimentConfig apply_sweep(const ExperimentConfig& cfg, std::size_t i) {
  if (!cfg.sweep || i >= cfg.sweep->size()) throw InvalidInput("apply_sweep: no such sweep entry");
  ExperimentConfig out = cfg;
  const SweepSpec& w = *cfg.sweep;
  out.sweep.reset();
  out.name = w.label(i);
  switch (w.axis) {
    case SweepAxis::B0:
      out.model.b0 = w.values[i];
      break;
    case SweepAxis::SampleCount: {
      const int n = static_cast<int>(w.values[i]);
      const Problem p = build_problem(cfg.problem);
      out.problem.resolution.assign(static_cast<std::size_t>(p.dim), n);
      break;
    }
    case SweepAxis::LearningRate:
      out.train.learning_rate = w.values[i];
      break;
    case SweepAxis::RbfKind:
      out.model.kind = rbf_kind_from_string(w.kinds[i]);
      break;
  }
  return out;
}

// --- metrics -----------------------------------------------------------------

namespace {

// Distance in y from the nearest shear front at time t. Fronts leave both walls
// at t = 0 with speed sqrt(eta0 / (lambda rho)) and reflect off the walls.
double front_distance(const UcmConstants& c, double y, double t) {
  const double speed = std::sqrt(c.eta0 / (c.lambda * c.rho));
  const double width = 2.0 * c.h;
  double p = std::fmod(speed * t, 2.0 * width);
  if (p > width) p = 2.0 * width - p;
  const double from_lower = -c.h + p;
  const double from_upper = c.h - p;
  return std::min(std::abs(y - from_lower), std::abs(y - from_upper));
}

}  // namespace

std::map<std::string, double> field_metrics(const Problem& problem, std::span<const Network> nets,
                                            const Eigen::MatrixXd& grid) {
  std::map<std::string, double> m;
  const Eigen::MatrixXd pred = predict(nets, grid);
  std::vector<double> x(static_cast<std::size_t>(grid.cols()));
  if (problem.spec.kind == ProblemKind::Spring1D) {
    double far = 0.0;
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      x[0] = grid(i, 0);
      if (x[0] < 10.0) continue;
      far = std::max(far, std::abs(pred(i, 0) - exact_solution(problem.spec, x)[0]));
    }
    m["far_max_abs_error"] = far;
  }
  if (problem.spec.kind == ProblemKind::UcmPoiseuille) {
    const UcmConstants c;
    const double band = 0.05;
    double front_sum = 0.0, bulk_sum = 0.0, front_max = 0.0, bulk_max = 0.0, all_max = 0.0;
    long front_n = 0, bulk_n = 0;
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      for (Eigen::Index k = 0; k < grid.cols(); ++k) x[k] = grid(i, k);
      const double err = std::abs(pred(i, 0) - exact_solution(problem.spec, x)[0]) / c.u_max();
      all_max = std::max(all_max, err);
      if (x[1] > 0.0 && front_distance(c, x[0], x[1]) < band) {
        front_sum += err;
        front_max = std::max(front_max, err);
        ++front_n;
      } else {
        bulk_sum += err;
        bulk_max = std::max(bulk_max, err);
        ++bulk_n;
      }
    }
    m["relative_max_error_u"] = all_max;
    m["front_mae_relative"] = front_n ? front_sum / front_n : 0.0;
    m["bulk_mae_relative"] = bulk_n ? bulk_sum / bulk_n : 0.0;
    m["front_max_error_relative"] = front_max;
    m["bulk_max_error_relative"] = bulk_max;
    m["front_to_bulk_ratio"] = bulk_sum > 0.0 ? m["front_mae_relative"] / m["bulk_mae_relative"]
                                              : std::numeric_limits<double>::infinity();
  }
  return m;
}

// --- single run --------------------------------------------------------------

namespace {

Eigen::MatrixXd evaluation_grid(const Problem& problem, const TrainConfig& t) {
  return t.metric_grid.empty() ? metric_grid(problem) : tensor_grid(problem.lower, problem.upper, t.metric_grid);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text << '\n';
  if (!out) throw InvalidInput("write failed for " + path.string());
}

json metrics_json(const std::map<std::string, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = finite_or_string(v);
  return j;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string compiler_id() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

void write_loss_history(const fs::path& dir, const TrainLog& log) {
  CsvTable t;
  t.header = {"iter", "L", "L_g", "L_b", "w_g", "w_b"};
  for (std::size_t i = 0; i < log.iteration.size(); ++i) {
    t.rows.push_back({static_cast<double>(log.iteration[i]), log.L[i], log.L_g[i], log.L_b[i], log.w_g[i], log.w_b[i]});
  }
  write_csv(dir / "loss_history.csv", t);
}

void write_metrics_history(const fs::path& dir, const Problem& problem, const TrainLog& log) {
  CsvTable t;
  t.header = {"iter"};
  for (const auto& f : problem.field_names) {
    t.header.push_back("mae_" + f);
    t.header.push_back("max_abs_error_" + f);
  }
  for (const auto& e : log.metrics) {
    std::vector<double> row = {static_cast<double>(e.iteration)};
    for (std::size_t m = 0; m < e.mae.size(); ++m) {
      row.push_back(e.mae[m]);
      row.push_back(e.max_abs[m]);
    }
    t.rows.push_back(std::move(row));
  }
  write_csv(dir / "metrics_history.csv", t);
}

void write_fields(const fs::path& dir, const Problem& problem, std::span<const Network> nets,
                  const Eigen::MatrixXd& grid) {
  const Eigen::MatrixXd pred = predict(nets, grid);
  CsvTable t;
  t.header = problem.axis_names;
  for (const auto& f : problem.field_names) {
    t.header.push_back(f + "_pred");
    t.header.push_back(f + "_exact");
    t.header.push_back(f + "_abs_error");
  }
  std::vector<double> x(static_cast<std::size_t>(grid.cols()));
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index k = 0; k < grid.cols(); ++k) x[k] = grid(i, k);
    std::vector<double> row = x;
    const std::vector<double> exact = exact_solution(problem.spec, x);
    for (std::size_t m = 0; m < nets.size(); ++m) {
      const double p = pred(i, static_cast<Eigen::Index>(m));
      row.push_back(p);
      row.push_back(exact[m]);
      row.push_back(std::abs(p - exact[m]));
    }
    t.rows.push_back(std::move(row));
  }
  write_csv(dir / "fields.csv", t);
}

void write_snapshot(const fs::path& dir, const NtkSnapshot& s) {
  const std::string it = std::to_string(s.iteration);
  write_matrix_csv(dir / ("ntk_" + it + ".csv"), s.K());
  json meta;
  meta["iteration"] = s.iteration;
  meta["n_g"] = s.n_g();
  meta["n_b"] = s.n_b();
  meta["eigenvalues"] = std::vector<double>(s.eigenvalues.data(), s.eigenvalues.data() + s.eigenvalues.size());
  meta["diag_dominance"] = finite_or_string(s.diag_dominance);
  meta["drift_from_init"] = finite_or_string(s.drift_from_init);
  meta["relative_drift"] = finite_or_string(s.relative_drift);
  meta["trace_gg"] = s.trace_gg();
  meta["trace_bb"] = s.trace_bb();
  write_text(dir / ("ntk_" + it + "_meta.json"), meta.dump(1));
}

}  // namespace

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  const Problem problem = build_problem(cfg.problem);
  std::vector<Network> nets = build_networks(cfg, problem, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  fs::create_directories(dir);

  const Eigen::MatrixXd grid = evaluation_grid(problem, tc);
  const FieldErrors initial = evaluate_errors(problem, nets, grid);

  RunResult r;
  r.seed = seed;
  r.dir = dir;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r.log = train(problem, nets, tc);
  } catch (const DivergedTraining& e) {
    r.diverged = true;
    r.diverged_at = e.iteration();
    r.log = e.partial_log();
  }
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const FieldErrors final_err = evaluate_errors(problem, nets, grid);
  auto& m = r.metrics;
  for (std::size_t f = 0; f < problem.field_names.size(); ++f) {
    m["mae_" + problem.field_names[f]] = final_err.mae[f];
    m["max_abs_error_" + problem.field_names[f]] = final_err.max_abs[f];
    m["initial_mae_" + problem.field_names[f]] = initial.mae[f];
  }
  m["mae"] = final_err.mae[0];
  m["max_abs_error"] = final_err.max_abs[0];
  m["initial_mae"] = initial.mae[0];
  m["initial_max_abs_error"] = initial.max_abs[0];
  m["mae_ratio"] = initial.mae[0] > 0.0 ? final_err.mae[0] / initial.mae[0] : 0.0;
  m["final_L"] = r.log.L.back();
  m["final_L_g"] = r.log.L_g.back();
  m["final_L_b"] = r.log.L_b.back();
  m["initial_L_g"] = r.log.L_g.front();
  m["initial_L_b"] = r.log.L_b.front();
  double min_l = std::numeric_limits<double>::infinity();
  for (double v : r.log.L) {
    if (std::isfinite(v)) min_l = std::min(min_l, v);
  }
  m["min_L"] = min_l;
  m["iterations_run"] = r.log.iterations_run;
  m["diverged"] = r.diverged ? 1.0 : 0.0;
  for (const auto& s : r.log.snapshots) {
    m["diag_dominance_" + std::to_string(s.iteration)] = s.diag_dominance;
    m["relative_drift_" + std::to_string(s.iteration)] = s.relative_drift;
  }
  if (!r.diverged) {
    for (const auto& [k, v] : field_metrics(problem, nets, grid)) m[k] = v;
  }

  write_loss_history(dir, r.log);
  write_metrics_history(dir, problem, r.log);
  write_fields(dir, problem, nets, grid);
  for (const auto& s : r.log.snapshots) write_snapshot(dir, s);
  for (const auto& [it, docs] : r.log.checkpoints) {
    json ck;
    ck["iteration"] = it;
    ck["networks"] = json::array();
    for (const auto& d : docs) ck["networks"].push_back(json::parse(d));
    write_text(dir / ("checkpoint_" + std::to_string(it) + ".json"), ck.dump(1));
  }
  {
    json fin = json::array();
    for (const auto& n : nets) fin.push_back(json::parse(to_json(n)));
    write_text(dir / "model_final.json", fin.dump(1));
  }

  json metrics = metrics_json(m);
  if (r.diverged) metrics["diverged_at"] = r.diverged_at;
  write_text(dir / "metrics.json", metrics.dump(1));

  ExperimentConfig resolved = cfg;
  resolved.seeds = {seed};
  const json cj = config_json(resolved);
  json manifest;
  manifest["config_hash"] = fnv1a_hex(cj.dump());
  manifest["config"] = cj;
  manifest["seed"] = seed;
  manifest["pirbn_version"] = PIRBN_VERSION;
  manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  manifest["nlohmann_json_version"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  manifest["compiler"] = compiler_id();
  manifest["created_utc"] = utc_timestamp();
  manifest["runtime_seconds"] = r.runtime_seconds;
  manifest["seconds_per_1000"] = r.log.seconds_per_1000;
  manifest["iterations_run"] = r.log.iterations_run;
  manifest["diverged"] = r.diverged;
  write_text(dir / "manifest.json", manifest.dump(1));
  return r;
}

// --- gates, repeats, sweeps --------------------------------------------------

GateOutcome evaluate_gate(const GateSpec& gate, const std::vector<RunResult>& runs) {
  GateOutcome g;
  g.required_runs = gate.min_passing_runs < 0 ? static_cast<int>(runs.size()) : gate.min_passing_runs;
  for (const auto& r : runs) {
    bool ok = !r.diverged;
    if (r.diverged) g.failures.push_back("seed " + std::to_string(r.seed) + ": diverged");
    for (const auto& b : gate.bounds) {
      const auto it = r.metrics.find(b.metric);
      if (it == r.metrics.end() || std::isnan(it->second)) {
        ok = false;
        g.failures.push_back("seed " + std::to_string(r.seed) + ": metric " + b.metric + " unavailable");
        continue;
      }
      const double v = it->second;
      if (b.min && !(v >= *b.min)) {
        ok = false;
        g.failures.push_back("seed " + std::to_string(r.seed) + ": " + b.metric + " = " + format_double(v) + " < " +
                             format_double(*b.min));
      }
      if (b.max && !(v <= *b.max)) {
        ok = false;
        g.failures.push_back("seed " + std::to_string(r.seed) + ": " + b.metric + " = " + format_double(v) + " > " +
                             format_double(*b.max));
      }
    }
    if (ok) ++g.passing_runs;
  }
  g.pass = g.passing_runs >= g.required_runs;
  return g;
}

bool ExperimentResult::any_diverged() const {
  return std::any_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.diverged; });
}

namespace {

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

fs::path seed_dir(const fs::path& base, const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.seeds.size() == 1 ? base : base / ("seed_" + std::to_string(seed));
}

void write_summary(const fs::path& dir, const std::vector<RunResult>& runs) {
  std::vector<std::string> keys;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.metrics) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());
  CsvTable t;
  t.header = {"seed"};
  t.header.insert(t.header.end(), keys.begin(), keys.end());
  json stats = json::object();
  for (const auto& r : runs) {
    std::vector<double> row = {static_cast<double>(r.seed)};
    for (const auto& k : keys) {
      const auto it = r.metrics.find(k);
      row.push_back(it == r.metrics.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
    }
    t.rows.push_back(std::move(row));
  }
  for (std::size_t c = 0; c < keys.size(); ++c) {
    double sum = 0.0, sq = 0.0;
    long n = 0;
    for (const auto& row : t.rows) {
      const double v = row[c + 1];
      if (!std::isfinite(v)) continue;
      sum += v;
      sq += v * v;
      ++n;
    }
    const double mean = n ? sum / n : std::numeric_limits<double>::quiet_NaN();
    const double var = n > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1)) : 0.0;
    stats[keys[c]] = {{"mean", finite_or_string(mean)}, {"std", finite_or_string(std::sqrt(var))}, {"count", n}};
  }
  write_csv(dir / "summary.csv", t);
  write_text(dir / "summary.json", stats.dump(1));
}

void finish_experiment(ExperimentResult& res, const ExperimentConfig& cfg) {
  if (res.runs.size() > 1) write_summary(res.dir, res.runs);
  if (cfg.gate) {
    res.gate = evaluate_gate(*cfg.gate, res.runs);
    json g;
    g["pass"] = res.gate->pass;
    g["passing_runs"] = res.gate->passing_runs;
    g["required_runs"] = res.gate->required_runs;
    g["failures"] = res.gate->failures;
    write_text(res.dir / "gate.json", g.dump(1));
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& root) {
  ExperimentResult res;
  res.dir = root / cfg.name;
  fs::create_directories(res.dir);
  res.runs.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
    res.runs[i] = run_single(cfg, cfg.seeds[i], seed_dir(res.dir, cfg, cfg.seeds[i]));
  });
  finish_experiment(res, cfg);
  return res;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const fs::path& root) {
  if (!cfg.sweep) throw ConfigError(cfg.name + ": sweep requested but the config has no \"sweep\" section");
  SweepResult out;
  out.dir = root / cfg.name;
  fs::create_directories(out.dir);
  const std::size_t n = cfg.sweep->size();
  std::vector<ExperimentConfig> point_cfg;
  for (std::size_t i = 0; i < n; ++i) point_cfg.push_back(apply_sweep(cfg, i));
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.points[i].label = cfg.sweep->label(i);
    out.points[i].value =
        cfg.sweep->axis == SweepAxis::RbfKind ? std::numeric_limits<double>::quiet_NaN() : cfg.sweep->values[i];
    out.points[i].result.dir = out.dir / point_cfg[i].name;
    out.points[i].result.runs.resize(cfg.seeds.size());
  }
  const std::size_t per = cfg.seeds.size();
  parallel_for(n * per, cfg.jobs, [&](std::size_t task) {
    const std::size_t i = task / per;
    const std::size_t j = task % per;
    const ExperimentConfig& pc = point_cfg[i];
    out.points[i].result.runs[j] = run_single(pc, pc.seeds[j], seed_dir(out.points[i].result.dir, pc, pc.seeds[j]));
  });

  std::ostringstream csv;
  csv << "label,value,seed,final_L_g,final_L_b,mae,max_abs_error,diverged,unstable,not_converged\n";
  for (std::size_t i = 0; i < n; ++i) {
    SweepPoint& p = out.points[i];
    finish_experiment(p.result, point_cfg[i]);
    for (const auto& r : p.result.runs) {
      const bool diverged = r.diverged;
      const double final_l = r.metrics.at("final_L");
      const bool unstable = diverged || !(final_l <= 100.0 * r.metrics.at("min_L"));
      const bool not_converged = diverged || !(r.metrics.at("mae_ratio") < 0.5);
      p.diverged = p.diverged || diverged;
      p.unstable = p.unstable || unstable;
      p.not_converged = p.not_converged || not_converged;
      csv << p.label << ',' << format_double(p.value) << ',' << r.seed << ',' << format_double(r.metrics.at("final_L_g"))
          << ',' << format_double(r.metrics.at("final_L_b")) << ',' << format_double(r.metrics.at("mae")) << ','
          << format_double(r.metrics.at("max_abs_error")) << ',' << diverged << ',' << unstable << ','
          << not_converged << '\n';
    }
  }
  write_text(out.dir / "sweep_summary.csv", csv.str().substr(0, csv.str().size() - 1));
  return out;
}

// --- NTK report --------------------------------------------------------------

std::vector<NtkReportRow> ntk_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("ntk_report: " + dir.string() + " is not a directory");
  const std::regex meta_name(R"(ntk_(\d+)_meta\.json)");
  std::vector<NtkReportRow> rows;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string fname = entry.path().filename().string();
    std::smatch match;
    if (!std::regex_match(fname, match, meta_name)) continue;
    std::ifstream in(entry.path());
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw InvalidInput("ntk_report: " + entry.path().string() + ": " + e.what());
    }
    NtkReportRow row;
    row.iteration = std::stoi(match[1].str());
    row.n_g = meta.at("n_g").get<Eigen::Index>();
    row.n_b = meta.at("n_b").get<Eigen::Index>();
    auto number = [&](const char* k) {
      const json& v = meta.at(k);
      return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
    };
    row.drift_from_init = number("drift_from_init");
    row.relative_drift = number("relative_drift");
    const auto eig = meta.at("eigenvalues").get<std::vector<double>>();
    row.top_eigenvalues.assign(eig.begin(), eig.begin() + static_cast<long>(std::min<std::size_t>(10, eig.size())));

    const fs::path kpath = dir / ("ntk_" + match[1].str() + ".csv");
    if (!fs::exists(kpath)) throw InvalidInput("ntk_report: missing " + kpath.string());
    const Eigen::MatrixXd K = read_matrix_csv(kpath);
    if (K.rows() != row.n_g + row.n_b || K.cols() != K.rows()) {
      throw InvalidInput("ntk_report: " + kpath.string() + " does not match its metadata");
    }
    const Eigen::MatrixXd Kg = K.topLeftCorner(row.n_g, row.n_g);
    if (Kg.diagonal().allFinite() && (Kg.diagonal().array() > 0.0).all()) {
      const Eigen::MatrixXd nk = normalize(Kg);
      row.diag_dominance = diag_dominance(nk);
      write_matrix_csv(dir / ("normalized_K_g_" + match[1].str() + ".csv"), nk);
    } else {
      row.diag_dominance = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("ntk_report: no ntk_<iter>_meta.json snapshots in " + dir.string());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.iteration < b.iteration; });

  CsvTable t;
  t.header = {"iteration", "n_g", "n_b", "diag_dominance", "drift_from_init", "relative_drift"};
  for (int k = 1; k <= 10; ++k) t.header.push_back("lambda_" + std::to_string(k));
  for (const auto& r : rows) {
    std::vector<double> v = {static_cast<double>(r.iteration), static_cast<double>(r.n_g),
                             static_cast<double>(r.n_b),       r.diag_dominance,
                             r.drift_from_init,                r.relative_drift};
    for (std::size_t k = 0; k < 10; ++k) {
      v.push_back(k < r.top_eigenvalues.size() ? r.top_eigenvalues[k] : std::numeric_limits<double>::quiet_NaN());
    }
    t.rows.push_back(std::move(v));
  }
  write_csv(dir / "ntk_report.csv", t);
  return rows;
}

fs::path output_root(const std::string& fallback) {
  if (const char* env = std::getenv("PIRBN_OUTPUT_ROOT"); env && *env) return env;
  return fallback;
}

}  // namespace pirbn
