#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "pirbn/error.hpp"
#include "pirbn/model.hpp"
#include "pirbn/ntk.hpp"
#include "pirbn/problems.hpp"

namespace pirbn {

enum class Optimizer { Adam, GradientDescent };

struct TrainConfig {
  double learning_rate = 1e-3;
  int iterations = 20000;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::vector<int> ntk_snapshot_iters = {0, 2000, 20000};
  bool adaptive_weights = false;
  int weight_update_period = 1000;
  /// Multiply the step of every PIRBN outer weight a_i by sqrt(width). Adam is
  /// invariant to gradient scale, so this reproduces the trajectory of a network
  /// written without the 1/sqrt(d) output factor and a_i ~ N(0, 1/d).
  bool sqrt_width_amplitude_lr = false;
  /// Oracle metrics every this many iterations (0 = only at snapshots and the end).
  int metric_every = 1000;
  /// Points per axis of the metric grid; empty means the problem default.
  std::vector<int> metric_grid;

  void validate() const;
};

struct LossWeights {
  double w_g = 1.0;
  double w_b = 1.0;
};

struct LossValue {
  double total = 0.0;
  double L_g = 0.0;
  double L_b = 0.0;
};

/// L_g = 1/2 sum r_g^2, L_b = 1/2 sum r_b^2, total = w_g L_g + w_b L_b.
LossValue loss(const ResidualSystem& sys, LossWeights w = {});

/// w_g J_g^T r_g + w_b J_b^T r_b.
Eigen::VectorXd grad(const ResidualSystem& sys, LossWeights w = {});

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit AdamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam update of `theta` in place. `lr_scale`, if nonempty,
/// multiplies the learning rate per parameter.
void adam_step(AdamState& state, Eigen::VectorXd& theta, const Eigen::VectorXd& gradient, const TrainConfig& cfg,
               const Eigen::VectorXd& lr_scale = {});

/// Per-parameter learning-rate multipliers implied by `cfg` for `nets`.
Eigen::VectorXd learning_rate_scale(std::span<const Network> nets, const TrainConfig& cfg);

/// w_g = tr(K) / tr(K_gg), w_b = tr(K) / tr(K_bb), tr(K) = tr(K_gg) + tr(K_bb).
LossWeights adaptive_weights(const NtkSnapshot& ntk);
LossWeights adaptive_weights(double trace_gg, double trace_bb);

/// The kernel traces straight from the Jacobians (squared Frobenius norms).
LossWeights adaptive_weights(const ResidualSystem& sys);

struct FieldErrors {
  int iteration = 0;
  std::vector<double> mae;        // per field
  std::vector<double> max_abs;    // per field
};

/// Errors of the networks against the exact solution at `points`.
FieldErrors evaluate_errors(const Problem& problem, std::span<const Network> nets, const Eigen::MatrixXd& points);

struct TrainLog {
  std::vector<int> iteration;
  std::vector<double> L;
  std::vector<double> L_g;
  std::vector<double> L_b;
  std::vector<double> w_g;
  std::vector<double> w_b;
  std::vector<FieldErrors> metrics;
  std::vector<NtkSnapshot> snapshots;
  std::vector<std::pair<int, std::vector<std::string>>> checkpoints;  // iteration, one JSON per network
  std::vector<double> seconds_per_1000;
  int iterations_run = 0;
};

class DivergedTraining : public Error {
 public:
  DivergedTraining(int iteration, TrainLog partial);
  int iteration() const { return iteration_; }
  const TrainLog& partial_log() const { return log_; }

 private:
  int iteration_;
  TrainLog log_;
};

/// Full-batch training. Loss history has iterations + 1 entries: entry k is the
/// loss at the parameters after k updates. Throws DivergedTraining on a
/// non-finite loss.
TrainLog train(const Problem& problem, std::vector<Network>& nets, const TrainConfig& cfg);

}  // namespace pirbn
