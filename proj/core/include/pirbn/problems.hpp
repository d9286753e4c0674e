#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pirbn/model.hpp"

namespace pirbn {

enum class ProblemKind { Poisson1D, MixedFreq1D, Spring1D, Wave2D, Diffusion2D, UcmPoiseuille };

std::string_view to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(std::string_view name);

/// Problem selection. `resolution` holds interior points per axis; empty means
/// the per-problem default. `mu` and `shift` only affect Poisson1D.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::Poisson1D;
  double mu = 4.0;
  double shift = 0.0;
  std::vector<int> resolution;
};

enum class Quantity { Value, FirstDerivative, SecondDerivative };

/// coeff * (d/dx_axis)^q u_net
struct Term {
  int net = 0;
  Quantity quantity = Quantity::Value;
  int axis = 0;
  double coeff = 1.0;
};

/// Linear combination of terms, optionally plus sin(u_0) (the spring nonlinearity).
struct Operator {
  std::string name;
  std::vector<Term> terms;
  bool add_sin_u = false;
};

/// One residual row per entry: points.row(i) under operators[op[i]] minus targets[i].
struct CollocationSet {
  Eigen::MatrixXd points;
  std::vector<int> op;
  Eigen::VectorXd targets;

  Eigen::Index size() const { return points.rows(); }
};

struct Problem {
  ProblemSpec spec;
  int dim = 1;
  int n_nets = 1;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> axis_names;
  std::vector<std::string> field_names;  // one per network
  std::vector<Operator> operators;
  CollocationSet interior;
  CollocationSet boundary;

  Eigen::Index n_g() const { return interior.size(); }
  Eigen::Index n_b() const { return boundary.size(); }
};

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Residuals and their exact parameter Jacobians. Columns are the concatenated
/// parameter vectors of all networks, in network order.
struct ResidualSystem {
  Eigen::VectorXd r_g;
  Eigen::VectorXd r_b;
  SparseRows J_g;
  SparseRows J_b;

  Eigen::Index parameter_count() const { return J_g.cols(); }
};

/// Interior collocation per axis, before any kind-specific default is applied.
std::vector<int> default_resolution(ProblemKind kind);

Problem build_problem(const ProblemSpec& spec);

/// Evaluate every residual row. Pass `with_jacobian = false` to skip J.
ResidualSystem assemble(const Problem& problem, std::span<const Network> nets, bool with_jacobian = true);

/// Number of trainable parameters summed over `nets`.
Eigen::Index total_parameters(std::span<const Network> nets);
Eigen::VectorXd stacked_parameters(std::span<const Network> nets);
void set_stacked_parameters(std::span<Network> nets, const Eigen::VectorXd& theta);

/// Predicted fields at each row of `points`: result is points.rows() x nets.size().
Eigen::MatrixXd predict(std::span<const Network> nets, const Eigen::MatrixXd& points);

/// Uniform evaluation grid including the domain boundary.
Eigen::MatrixXd metric_grid(const Problem& problem);

/// Closed-range uniform tensor grid, last axis fastest.
Eigen::MatrixXd tensor_grid(const std::vector<double>& lower, const std::vector<double>& upper,
                            const std::vector<int>& count);

}  // namespace pirbn
