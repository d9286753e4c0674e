#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pirbn/rbf.hpp"

namespace pirbn {

/// Uniform tensor grid of centres: per-axis closed range and count.
struct CenterGrid {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> count;

  int dim() const { return static_cast<int>(count.size()); }
  int size() const;
  /// Row-major tensor product, last axis fastest.
  Eigen::MatrixXd points() const;
};

/// Single hidden layer radial basis network
///   y(x) = d^{-1/2} * sum_i a_i G_i(x),  G_i(x) = F(b_i^2 |x - c_i|^2).
/// a and b are trainable; the centres are fixed at construction.
/// Parameter vector layout: (a_1..a_d, b_1..b_d).
class Pirbn {
 public:
  Pirbn(RbfKind kind, Eigen::MatrixXd centers, Eigen::VectorXd a, Eigen::VectorXd b);

  RbfKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(centers_.cols()); }
  int width() const { return static_cast<int>(centers_.rows()); }
  int parameter_count() const { return 2 * width(); }
  double output_scale() const { return scale_; }

  const Eigen::MatrixXd& centers() const { return centers_; }
  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::VectorXd& b() const { return b_; }

  Eigen::VectorXd parameters() const;
  void set_parameters(std::span<const double> theta);

  /// Gaussian neurons with b_i^2 |x - c_i|^2 above this value are skipped during
  /// evaluation (their weight is below exp(-cutoff)). Infinity means exact.
  double support_cutoff() const { return cutoff_; }
  void set_support_cutoff(double cutoff);

  const std::optional<CenterGrid>& grid() const { return grid_; }
  void set_grid(CenterGrid grid) { grid_ = std::move(grid); }

 private:
  RbfKind kind_;
  Eigen::MatrixXd centers_;
  Eigen::VectorXd a_;
  Eigen::VectorXd b_;
  double scale_;
  double cutoff_ = std::numeric_limits<double>::infinity();
  std::optional<CenterGrid> grid_;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_out x fan_in
  Eigen::VectorXd bias;
};

/// tanh feedforward network with scalar output and a linear last layer.
/// Parameter vector layout is layer-major: W_1 (row-major), b_1, W_2, b_2, ...
class Fnn {
 public:
  /// widths = {input, hidden..., 1}
  explicit Fnn(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  int dim() const { return widths_.front(); }
  int parameter_count() const { return param_count_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Eigen::VectorXd parameters() const;
  void set_parameters(std::span<const double> theta);

 private:
  std::vector<int> widths_;
  std::vector<DenseLayer> layers_;
  int param_count_ = 0;
};

using Network = std::variant<Pirbn, Fnn>;

/// Network output with pure spatial derivatives and their parameter Jacobian rows.
///
/// `jacobian` has 1 + 2*dim rows, ordered (u, du/dx_1..du/dx_dim, d2u/dx_1^2..),
/// and one column per entry of `index` (the parameters the point depends on;
/// every other parameter has a zero partial).
struct NetworkDerivs {
  double u = 0.0;
  Eigen::VectorXd du;
  Eigen::VectorXd d2u;
  std::vector<Eigen::Index> index;
  Eigen::MatrixXd jacobian;

  int dim() const { return static_cast<int>(du.size()); }
  /// Expand row `r` of `jacobian` into a dense vector of the given length.
  Eigen::VectorXd dense_row(int r, Eigen::Index parameter_count) const;
};

double pirbn_forward(const Pirbn& net, std::span<const double> x);
NetworkDerivs pirbn_derivs(const Pirbn& net, std::span<const double> x);

double fnn_forward(const Fnn& net, std::span<const double> x);
NetworkDerivs fnn_forward_derivs(const Fnn& net, std::span<const double> x);

enum class CenterPlacement { Uniform, Random };

/// Centres on `grid` (uniform) or drawn uniformly inside its bounding box (random),
/// all b_i = b0, a_i ~ N(0, 1) from `seed`.
Pirbn init_pirbn(RbfKind kind, const CenterGrid& grid, double b0, std::uint64_t seed,
                 CenterPlacement placement = CenterPlacement::Uniform);

/// LeCun normal weights N(0, 1/fan_in), zero biases.
Fnn init_fnn(std::vector<int> widths, std::uint64_t seed);

// Uniform access over the variant.
int input_dim(const Network& net);
int parameter_count(const Network& net);
Eigen::VectorXd parameters(const Network& net);
void set_parameters(Network& net, std::span<const double> theta);
double forward(const Network& net, std::span<const double> x);
NetworkDerivs derivs(const Network& net, std::span<const double> x);

/// Evaluates one network at many points. For Gaussian PIRBNs with a finite
/// support cutoff it buckets the centres once so each point only visits
/// neurons whose support can reach it.
class NetworkEvaluator {
 public:
  explicit NetworkEvaluator(const Network& net);
  NetworkDerivs derivs(std::span<const double> x) const;
  double forward(std::span<const double> x) const;

 private:
  static constexpr int kMaxBucketDim = 8;
  void neighbours(std::span<const double> x, std::vector<Eigen::Index>& out) const;
  std::size_t linear_cell(std::span<const int> idx) const;

  const Network* net_;
  bool bucketed_ = false;
  Eigen::VectorXd lo_;
  double cell_ = 0.0;
  std::vector<int> cells_per_axis_;
  std::vector<std::vector<Eigen::Index>> buckets_;
  std::vector<Eigen::Index> wide_;
};

NetworkDerivs pirbn_derivs_subset(const Pirbn& net, std::span<const double> x,
                                  std::span<const Eigen::Index> neurons);

/// Flat JSON document: kind, dim, widths, centre grid, parameter arrays.
std::string to_json(const Network& net);
Network network_from_json(const std::string& text);

}  // namespace pirbn
