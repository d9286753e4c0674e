#pragma once

#include <Eigen/Core>
#include <limits>
#include <optional>

#include "pirbn/model.hpp"
#include "pirbn/problems.hpp"

namespace pirbn {

/// Empirical neural tangent kernel of the residual map at one training iteration.
struct NtkSnapshot {
  int iteration = 0;
  Eigen::MatrixXd K_gg;
  Eigen::MatrixXd K_gb;
  Eigen::MatrixXd K_bb;
  Eigen::VectorXd eigenvalues;  // of the full kernel, descending; empty until analysed
  Eigen::MatrixXd normalized_K_g;
  double diag_dominance = std::numeric_limits<double>::quiet_NaN();
  double drift_from_init = std::numeric_limits<double>::quiet_NaN();
  double relative_drift = std::numeric_limits<double>::quiet_NaN();

  Eigen::Index n_g() const { return K_gg.rows(); }
  Eigen::Index n_b() const { return K_bb.rows(); }
  /// [[K_gg, K_gb], [K_gb^T, K_bb]]
  Eigen::MatrixXd K() const;
  double trace_gg() const { return K_gg.trace(); }
  double trace_bb() const { return K_bb.trace(); }
};

/// Kernel blocks K_gg = J_g J_g^T, K_gb = J_g J_b^T, K_bb = J_b J_b^T.
NtkSnapshot compute_ntk(const ResidualSystem& sys, int iteration = 0);

/// Fill eigenvalues, normalized_K_g and diag_dominance; if `initial` is given, also the drift.
/// A K_gg with a nonpositive diagonal leaves normalized_K_g empty and diag_dominance NaN.
void analyse(NtkSnapshot& snap, const NtkSnapshot* initial = nullptr);

/// Correlation normalization K_ij / sqrt(K_ii K_jj).
Eigen::MatrixXd normalize(const Eigen::MatrixXd& K);

struct Spectrum {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column j pairs with values[j]; Q = vectors^T
};

Spectrum spectral(const Eigen::MatrixXd& K, bool with_vectors = true);

/// Gradient-flow prediction of Q r(t) = diag(exp(-lambda_i t)) Q r(0). Negative
/// eigenvalues (roundoff) are clamped to zero.
Eigen::VectorXd predicted_decay(const Spectrum& spectrum, const Eigen::VectorXd& initial_residual, double t);

struct Drift {
  double absolute = 0.0;
  double relative = 0.0;  // absolute / ||K_0||_2
};

/// Spectral norm of K_t - K_0. Matrices above `dense_limit` rows use power iteration.
Drift drift(const Eigen::MatrixXd& K_t, const Eigen::MatrixXd& K_0, Eigen::Index dense_limit = 1200);

/// Largest |eigenvalue| of a symmetric matrix.
double spectral_norm(const Eigen::MatrixXd& S, Eigen::Index dense_limit = 1200);

/// 1 - mean |off-diagonal|; 1 for a perfectly local kernel.
double diag_dominance(const Eigen::MatrixXd& normalized);

struct KernelEntries {
  double K_bb = 0.0;
  double K_gb = 0.0;
  double K_gg = 0.0;
};

/// Infinite-width kernel of a 1D Gaussian network for the operator d^2/dx^2,
/// averaged over the neuron population (centres and shapes of `net`) with E[a^2] = 1.
KernelEntries theoretical_kernel(const Pirbn& net, double x, double x_prime);

/// Theta = exp(-b^2 ((x - c)^2 + (x' - c)^2)).
double overlap_theta(double b, double c, double x, double x_prime);

}  // namespace pirbn
