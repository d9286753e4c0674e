#include "pirbn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pirbn/oracle.hpp"

namespace pirbn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (weight_update_period < 1) throw ConfigError("weight_update_period must be >= 1");
  if (metric_every < 0) throw ConfigError("metric_every must be >= 0");
  for (int n : metric_grid) {
    if (n < 2) throw ConfigError("metric_grid needs at least 2 points per axis");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("Adam hyperparameters out of range");
  }
}

LossValue loss(const ResidualSystem& sys, LossWeights w) {
  LossValue v;
  v.L_g = 0.5 * sys.r_g.squaredNorm();
  v.L_b = 0.5 * sys.r_b.squaredNorm();
  v.total = w.w_g * v.L_g + w.w_b * v.L_b;
  return v;
}

Eigen::VectorXd grad(const ResidualSystem& sys, LossWeights w) {
  Eigen::VectorXd g = w.w_g * (sys.J_g.transpose() * sys.r_g);
  g += w.w_b * (sys.J_b.transpose() * sys.r_b);
  return g;
}

void adam_step(AdamState& state, Eigen::VectorXd& theta, const Eigen::VectorXd& gradient, const TrainConfig& cfg,
               const Eigen::VectorXd& lr_scale) {
  if (state.m.size() != theta.size()) {
    state = AdamState(theta.size());
  }
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * gradient;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Eigen::ArrayXd step = cfg.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.epsilon);
  if (lr_scale.size() == 0) {
    theta.array() -= step;
  } else {
    if (lr_scale.size() != theta.size()) throw DimensionMismatch("adam_step: lr_scale length mismatch");
    theta.array() -= step * lr_scale.array();
  }
}

Eigen::VectorXd learning_rate_scale(std::span<const Network> nets, const TrainConfig& cfg) {
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(total_parameters(nets));
  if (!cfg.sqrt_width_amplitude_lr) return scale;
  Eigen::Index off = 0;
  for (const auto& net : nets) {
    if (const auto* p = std::get_if<Pirbn>(&net)) {
      scale.segment(off, p->width()).setConstant(std::sqrt(static_cast<double>(p->width())));
    }
    off += parameter_count(net);
  }
  return scale;
}

LossWeights adaptive_weights(double trace_gg, double trace_bb) {
  if (!(trace_gg > 0.0) || !(trace_bb > 0.0)) throw DegenerateKernel("adaptive_weights: kernel traces must be positive");
  const double total = trace_gg + trace_bb;
  return {total / trace_gg, total / trace_bb};
}

LossWeights adaptive_weights(const NtkSnapshot& ntk) { return adaptive_weights(ntk.trace_gg(), ntk.trace_bb()); }

LossWeights adaptive_weights(const ResidualSystem& sys) {
  return adaptive_weights(sys.J_g.squaredNorm(), sys.J_b.squaredNorm());
}

FieldErrors evaluate_errors(const Problem& problem, std::span<const Network> nets, const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd pred = predict(nets, points);
  FieldErrors e;
  e.mae.assign(nets.size(), 0.0);
  e.max_abs.assign(nets.size(), 0.0);
  std::vector<double> x(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) x[k] = points(i, k);
    const std::vector<double> exact = exact_solution(problem.spec, x);
    for (std::size_t m = 0; m < nets.size(); ++m) {
      const double err = std::abs(pred(i, static_cast<Eigen::Index>(m)) - exact[m]);
      e.mae[m] += err;
      e.max_abs[m] = std::max(e.max_abs[m], err);
    }
  }
  for (double& v : e.mae) v /= static_cast<double>(points.rows());
  return e;
}

DivergedTraining::DivergedTraining(int iteration, TrainLog partial)
    : Error("training diverged: non-finite loss at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      log_(std::move(partial)) {}

TrainLog train(const Problem& problem, std::vector<Network>& nets, const TrainConfig& cfg) {
  cfg.validate();
  TrainLog log;
  const Eigen::MatrixXd grid =
      cfg.metric_grid.empty() ? metric_grid(problem) : tensor_grid(problem.lower, problem.upper, cfg.metric_grid);
  Eigen::VectorXd theta = stacked_parameters(nets);
  AdamState adam(theta.size());
  const Eigen::VectorXd lr_scale = learning_rate_scale(nets, cfg);
  LossWeights w;

  std::vector<int> snaps = cfg.ntk_snapshot_iters;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  std::optional<NtkSnapshot> initial;

  using clock = std::chrono::steady_clock;
  auto block_start = clock::now();

  for (int it = 0; it <= cfg.iterations; ++it) {
    const ResidualSystem sys = assemble(problem, nets);
    if (cfg.adaptive_weights && it % cfg.weight_update_period == 0) w = adaptive_weights(sys);
    const LossValue lv = loss(sys, w);
    log.iteration.push_back(it);
    log.L.push_back(lv.total);
    log.L_g.push_back(lv.L_g);
    log.L_b.push_back(lv.L_b);
    log.w_g.push_back(w.w_g);
    log.w_b.push_back(w.w_b);
    log.iterations_run = it;
    if (!std::isfinite(lv.total)) throw DivergedTraining(it, std::move(log));

    const bool snapshot = std::binary_search(snaps.begin(), snaps.end(), it);
    const bool last = it == cfg.iterations;
    if (snapshot || last || (cfg.metric_every > 0 && it % cfg.metric_every == 0)) {
      FieldErrors e = evaluate_errors(problem, nets, grid);
      e.iteration = it;
      log.metrics.push_back(std::move(e));
    }
    if (snapshot) {
      NtkSnapshot s = compute_ntk(sys, it);
      if (!initial) initial = s;
      analyse(s, &*initial);
      log.snapshots.push_back(std::move(s));
      std::vector<std::string> docs;
      for (const auto& net : nets) docs.push_back(to_json(net));
      log.checkpoints.emplace_back(it, std::move(docs));
    }
    if (last) break;

    const Eigen::VectorXd g = grad(sys, w);
    if (cfg.optimizer == Optimizer::Adam) {
      adam_step(adam, theta, g, cfg, lr_scale);
    } else {
      theta.array() -= cfg.learning_rate * g.array() * lr_scale.array();
    }
    set_stacked_parameters(nets, theta);

    if ((it + 1) % 1000 == 0) {
      const auto now = clock::now();
      log.seconds_per_1000.push_back(std::chrono::duration<double>(now - block_start).count());
      block_start = now;
    }
  }
  return log;
}

}  // namespace pirbn
