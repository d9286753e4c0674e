#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pirbn/problems.hpp"

namespace pirbn {

/// Transient Poiseuille flow of an upper-convected Maxwell fluid started from rest.
struct UcmConstants {
  double rho = 1.0 / 3.0;
  double eta0 = 0.5;
  double lambda = 1.0 / 3.0;
  double f = -1.5;  // pressure gradient; the momentum source is -f
  double h = 0.5;   // half-channel width
  int n_terms = 200;

  /// Elasticity number lambda * eta0 / (rho h^2).
  double elasticity() const { return lambda * eta0 / (rho * h * h); }
  /// Scale turning the dimensionless (U, T) into (u, tau): -f h^2 / (3 eta0).
  double u_max() const { return -f * h * h / (3.0 * eta0); }
};

struct UcmValue {
  double U = 0.0;     // u / u_max
  double T = 0.0;     // tau_xy / u_max
  double tail = 0.0;  // magnitude of the last summed term (max of both series)
};

/// Truncated eigenfunction series. Modes with E N^2 < 1 use cosh/sinh, modes
/// with E N^2 > 1 use cos/sin, so every term stays real.
UcmValue ucm_series(const UcmConstants& c, double y, double t);

/// Exact fields at `x`: one value per network of the problem.
std::vector<double> exact_solution(const ProblemSpec& spec, std::span<const double> x);

/// Interior right-hand side for every interior operator of the problem.
std::vector<double> forcing(const ProblemSpec& spec, std::span<const double> x);

struct SelfCheckReport {
  std::string problem;
  bool pass = false;
  int points_checked = 0;
  double max_residual = 0.0;
  double scale = 0.0;  // largest |term| seen, so the test is relative
  double tolerance = 0.0;
  std::string worst_operator;
  std::vector<double> worst_point;
};

/// Apply every interior and boundary operator of the problem to the exact
/// solution with central differences and compare with the targets.
/// Interior points are drawn uniformly from the open domain.
SelfCheckReport oracle_selfcheck(const ProblemSpec& spec, int n_points = 1000, std::uint64_t seed = 7);

}  // namespace pirbn
