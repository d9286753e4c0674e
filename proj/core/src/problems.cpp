#include "pirbn/problems.hpp"

#include <cmath>
#include <functional>
#include <numbers>

#include "pirbn/error.hpp"
#include "pirbn/oracle.hpp"

namespace pirbn {

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Poisson1D: return "poisson1d";
    case ProblemKind::MixedFreq1D: return "mixedfreq1d";
    case ProblemKind::Spring1D: return "spring1d";
    case ProblemKind::Wave2D: return "wave2d";
    case ProblemKind::Diffusion2D: return "diffusion2d";
    case ProblemKind::UcmPoiseuille: return "ucm_poiseuille";
  }
  return "unknown";
}

ProblemKind problem_kind_from_string(std::string_view name) {
  if (name == "poisson1d" || name == "poisson") return ProblemKind::Poisson1D;
  if (name == "mixedfreq1d" || name == "mixedfreq") return ProblemKind::MixedFreq1D;
  if (name == "spring1d" || name == "spring") return ProblemKind::Spring1D;
  if (name == "wave2d" || name == "wave") return ProblemKind::Wave2D;
  if (name == "diffusion2d" || name == "diffusion") return ProblemKind::Diffusion2D;
  if (name == "ucm_poiseuille" || name == "ucm") return ProblemKind::UcmPoiseuille;
  throw ConfigError("unknown problem '" + std::string(name) + "'");
}

std::vector<int> default_resolution(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Poisson1D: return {51};
    case ProblemKind::MixedFreq1D: return {101};
    case ProblemKind::Spring1D: return {1001};
    case ProblemKind::Wave2D: return {51, 51};
    case ProblemKind::Diffusion2D: return {51, 51};
    case ProblemKind::UcmPoiseuille: return {26, 101};
  }
  throw ConfigError("unknown problem kind");
}

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
  return v;
}

std::vector<double> open_linspace(double lo, double hi, int n) {
  std::vector<double> full = linspace(lo, hi, n + 2);
  return {full.begin() + 1, full.end() - 1};
}

Eigen::MatrixXd tensor(const std::vector<std::vector<double>>& axes) {
  const int dim = static_cast<int>(axes.size());
  Eigen::Index n = 1;
  for (const auto& a : axes) n *= static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd pts(n, dim);
  for (Eigen::Index row = 0; row < n; ++row) {
    Eigen::Index rem = row;
    for (int k = dim - 1; k >= 0; --k) {
      const auto m = static_cast<Eigen::Index>(axes[k].size());
      pts(row, k) = axes[k][static_cast<std::size_t>(rem % m)];
      rem /= m;
    }
  }
  return pts;
}

class SetBuilder {
 public:
  explicit SetBuilder(int dim) : dim_(dim) {}

  void add(const Eigen::MatrixXd& pts, int op, const std::function<double(std::span<const double>)>& target) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      std::vector<double> p(static_cast<std::size_t>(dim_));
      for (int k = 0; k < dim_; ++k) p[k] = pts(i, k);
      target_.push_back(target(p));
      points_.push_back(std::move(p));
      op_.push_back(op);
    }
  }

  CollocationSet finish() {
    CollocationSet s;
    s.points.resize(static_cast<Eigen::Index>(points_.size()), dim_);
    s.targets.resize(static_cast<Eigen::Index>(points_.size()));
    for (std::size_t i = 0; i < points_.size(); ++i) {
      for (int k = 0; k < dim_; ++k) s.points(static_cast<Eigen::Index>(i), k) = points_[i][k];
      s.targets[static_cast<Eigen::Index>(i)] = target_[i];
    }
    s.op = std::move(op_);
    return s;
  }

 private:
  int dim_;
  std::vector<std::vector<double>> points_;
  std::vector<int> op_;
  std::vector<double> target_;
};

// Edge of a 2D box at axis `fixed` = value, spanning the full closed range of the other axis.
Eigen::MatrixXd edge(const Problem& p, int fixed, double value, int n_other) {
  const int other = 1 - fixed;
  std::vector<std::vector<double>> axes(2);
  axes[fixed] = {value};
  axes[other] = linspace(p.lower[other], p.upper[other], n_other + 2);
  return tensor(axes);
}

double zero(std::span<const double>) { return 0.0; }

}  // namespace

Eigen::MatrixXd tensor_grid(const std::vector<double>& lower, const std::vector<double>& upper,
                            const std::vector<int>& count) {
  std::vector<std::vector<double>> axes;
  for (std::size_t k = 0; k < count.size(); ++k) axes.push_back(linspace(lower[k], upper[k], count[k]));
  return tensor(axes);
}

Problem build_problem(const ProblemSpec& in) {
  Problem p;
  p.spec = in;
  if (p.spec.resolution.empty()) p.spec.resolution = default_resolution(in.kind);
  const ProblemSpec& spec = p.spec;
  for (int r : spec.resolution) {
    if (r < 1) throw InvalidInput("build_problem: resolution must be positive");
  }
  const Operator value{"value", {{0, Quantity::Value, 0, 1.0}}, false};
  auto interior_target = [spec](std::span<const double> x) { return forcing(spec, x)[0]; };

  switch (spec.kind) {
    case ProblemKind::Poisson1D:
    case ProblemKind::MixedFreq1D:
    case ProblemKind::Spring1D: {
      p.dim = 1;
      if (spec.kind == ProblemKind::Poisson1D) {
        if (!std::isfinite(spec.mu) || !std::isfinite(spec.shift)) throw InvalidInput("build_problem: mu/shift");
        p.lower = {spec.shift};
        p.upper = {spec.shift + 1.0};
      } else if (spec.kind == ProblemKind::MixedFreq1D) {
        p.lower = {20.0};
        p.upper = {22.0};
      } else {
        p.lower = {0.0};
        p.upper = {100.0};
      }
      if (spec.resolution.size() != 1) throw InvalidInput("build_problem: 1D problem needs one resolution entry");
      p.axis_names = {"x"};
      p.field_names = {"u"};
      Operator pde{"pde", {{0, Quantity::SecondDerivative, 0, 1.0}}, false};
      if (spec.kind == ProblemKind::Spring1D) {
        pde.terms.push_back({0, Quantity::Value, 0, 4.0});
        pde.add_sin_u = true;
      }
      p.operators = {pde, value};
      SetBuilder g(1);
      g.add(tensor({open_linspace(p.lower[0], p.upper[0], spec.resolution[0])}), 0, interior_target);
      p.interior = g.finish();
      SetBuilder b(1);
      Eigen::MatrixXd lo(1, 1), hi(1, 1);
      lo << p.lower[0];
      hi << p.upper[0];
      b.add(lo, 1, zero);
      if (spec.kind == ProblemKind::Spring1D) {
        p.operators.push_back({"slope", {{0, Quantity::FirstDerivative, 0, 1.0}}, false});
        b.add(lo, 2, zero);
      } else {
        b.add(hi, 1, zero);
      }
      p.boundary = b.finish();
      break;
    }
    case ProblemKind::Wave2D: {
      p.dim = 2;
      p.lower = {0.0, 0.0};
      p.upper = {1.0, 1.0};
      p.axis_names = {"x", "y"};
      p.field_names = {"u"};
      if (spec.resolution.size() != 2) throw InvalidInput("build_problem: 2D problem needs two resolution entries");
      p.operators = {
          {"pde", {{0, Quantity::SecondDerivative, 0, 1.0}, {0, Quantity::SecondDerivative, 1, -4.0}}, false},
          value,
          {"slope_x", {{0, Quantity::FirstDerivative, 0, 1.0}}, false}};
      SetBuilder g(2);
      g.add(tensor({open_linspace(0.0, 1.0, spec.resolution[0]), open_linspace(0.0, 1.0, spec.resolution[1])}), 0,
            interior_target);
      p.interior = g.finish();
      SetBuilder b(2);
      b.add(edge(p, 1, 0.0, spec.resolution[0]), 1, zero);
      b.add(edge(p, 1, 1.0, spec.resolution[0]), 1, zero);
      b.add(edge(p, 0, 0.0, spec.resolution[1]), 1, [](std::span<const double> x) {
        const double pi = std::numbers::pi;
        return std::sin(pi * x[1]) + 0.5 * std::sin(4.0 * pi * x[1]);
      });
      b.add(edge(p, 0, 0.0, spec.resolution[1]), 2, zero);
      p.boundary = b.finish();
      break;
    }
    case ProblemKind::Diffusion2D: {
      p.dim = 2;
      p.lower = {5.0, 5.0};
      p.upper = {10.0, 10.0};
      p.axis_names = {"x", "t"};
      p.field_names = {"u"};
      if (spec.resolution.size() != 2) throw InvalidInput("build_problem: 2D problem needs two resolution entries");
      p.operators = {
          {"pde", {{0, Quantity::FirstDerivative, 1, 1.0}, {0, Quantity::SecondDerivative, 0, -0.01}}, false},
          value};
      SetBuilder g(2);
      g.add(tensor({open_linspace(5.0, 10.0, spec.resolution[0]), open_linspace(5.0, 10.0, spec.resolution[1])}), 0,
            interior_target);
      p.interior = g.finish();
      auto exact = [spec](std::span<const double> x) { return exact_solution(spec, x)[0]; };
      SetBuilder b(2);
      b.add(edge(p, 0, 5.0, spec.resolution[1]), 1, exact);
      b.add(edge(p, 0, 10.0, spec.resolution[1]), 1, exact);
      b.add(edge(p, 1, 5.0, spec.resolution[0]), 1, exact);
      p.boundary = b.finish();
      break;
    }
    case ProblemKind::UcmPoiseuille: {
      const UcmConstants c;
      p.dim = 2;
      p.n_nets = 2;
      p.lower = {-c.h, 0.0};
      p.upper = {c.h, 4.0};
      p.axis_names = {"y", "t"};
      p.field_names = {"u", "tau_xy"};
      if (spec.resolution.size() != 2) throw InvalidInput("build_problem: 2D problem needs two resolution entries");
      p.operators = {
          {"momentum", {{0, Quantity::FirstDerivative, 1, c.rho}, {1, Quantity::FirstDerivative, 0, -1.0}}, false},
          {"constitutive",
           {{0, Quantity::FirstDerivative, 0, c.eta0}, {1, Quantity::FirstDerivative, 1, -c.lambda},
            {1, Quantity::Value, 0, -1.0}},
           false},
          value,
          {"tau", {{1, Quantity::Value, 0, 1.0}}, false}};
      const Eigen::MatrixXd pts =
          tensor({open_linspace(-c.h, c.h, spec.resolution[0]), open_linspace(0.0, 4.0, spec.resolution[1])});
      SetBuilder g(2);
      g.add(pts, 0, [spec](std::span<const double> x) { return forcing(spec, x)[0]; });
      g.add(pts, 1, [spec](std::span<const double> x) { return forcing(spec, x)[1]; });
      p.interior = g.finish();
      SetBuilder b(2);
      b.add(edge(p, 0, -c.h, spec.resolution[1]), 2, zero);
      b.add(edge(p, 0, c.h, spec.resolution[1]), 2, zero);
      b.add(edge(p, 1, 0.0, spec.resolution[0]), 2, zero);
      b.add(edge(p, 1, 0.0, spec.resolution[0]), 3, zero);
      p.boundary = b.finish();
      break;
    }
  }
  return p;
}

Eigen::Index total_parameters(std::span<const Network> nets) {
  Eigen::Index n = 0;
  for (const auto& net : nets) n += parameter_count(net);
  return n;
}

Eigen::VectorXd stacked_parameters(std::span<const Network> nets) {
  Eigen::VectorXd theta(total_parameters(nets));
  Eigen::Index off = 0;
  for (const auto& net : nets) {
    const Eigen::VectorXd p = parameters(net);
    theta.segment(off, p.size()) = p;
    off += p.size();
  }
  return theta;
}

void set_stacked_parameters(std::span<Network> nets, const Eigen::VectorXd& theta) {
  Eigen::Index need = 0;
  for (const auto& net : nets) need += parameter_count(net);
  if (theta.size() != need) throw DimensionMismatch("set_stacked_parameters: wrong parameter count");
  Eigen::Index off = 0;
  for (auto& net : nets) {
    const int n = parameter_count(net);
    set_parameters(net, std::span<const double>(theta.data() + off, static_cast<std::size_t>(n)));
    off += n;
  }
}

namespace {

int derivs_row(Quantity q, int axis, int dim) {
  switch (q) {
    case Quantity::Value: return 0;
    case Quantity::FirstDerivative: return 1 + axis;
    case Quantity::SecondDerivative: return 1 + dim + axis;
  }
  return 0;
}

double derivs_value(const NetworkDerivs& d, Quantity q, int axis) {
  switch (q) {
    case Quantity::Value: return d.u;
    case Quantity::FirstDerivative: return d.du[axis];
    case Quantity::SecondDerivative: return d.d2u[axis];
  }
  return 0.0;
}

void assemble_set(const Problem& problem, const CollocationSet& set, std::span<const NetworkEvaluator> evals,
                  const std::vector<Eigen::Index>& offset, Eigen::Index P, bool with_jacobian,
                  Eigen::VectorXd& r, SparseRows& J) {
  const Eigen::Index n = set.size();
  const int dim = problem.dim;
  const int n_nets = problem.n_nets;
  r.resize(n);

  // Which networks each operator touches.
  std::vector<std::vector<char>> uses(problem.operators.size(), std::vector<char>(n_nets, 0));
  for (std::size_t o = 0; o < problem.operators.size(); ++o) {
    for (const Term& t : problem.operators[o].terms) uses[o][t.net] = 1;
    if (problem.operators[o].add_sin_u) uses[o][0] = 1;
  }

  if (with_jacobian) {
    J.resize(n, P);
    J.setZero();
  }
  std::vector<NetworkDerivs> d(static_cast<std::size_t>(n_nets));
  std::vector<double> pt(static_cast<std::size_t>(dim));
  Eigen::VectorXd combo;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Operator& op = problem.operators[static_cast<std::size_t>(set.op[i])];
    for (int k = 0; k < dim; ++k) pt[k] = set.points(i, k);
    for (int m = 0; m < n_nets; ++m) {
      if (uses[set.op[i]][m]) d[m] = evals[m].derivs(pt);
    }
    double value = -set.targets[i];
    for (const Term& t : op.terms) value += t.coeff * derivs_value(d[t.net], t.quantity, t.axis);
    if (op.add_sin_u) value += std::sin(d[0].u);
    r[i] = value;
    if (!with_jacobian) continue;

    J.startVec(i);
    for (int m = 0; m < n_nets; ++m) {
      if (!uses[set.op[i]][m]) continue;
      const NetworkDerivs& dm = d[m];
      combo.setZero(static_cast<Eigen::Index>(dm.index.size()));
      for (const Term& t : op.terms) {
        if (t.net == m) combo += t.coeff * dm.jacobian.row(derivs_row(t.quantity, t.axis, dim)).transpose();
      }
      if (op.add_sin_u && m == 0) combo += std::cos(dm.u) * dm.jacobian.row(0).transpose();
      for (std::size_t j = 0; j < dm.index.size(); ++j) {
        J.insertBack(i, offset[m] + dm.index[j]) = combo[static_cast<Eigen::Index>(j)];
      }
    }
  }
  if (with_jacobian) J.finalize();
}

}  // namespace

ResidualSystem assemble(const Problem& problem, std::span<const Network> nets, bool with_jacobian) {
  if (static_cast<int>(nets.size()) != problem.n_nets) {
    throw DimensionMismatch("assemble: " + std::string(to_string(problem.spec.kind)) + " needs " +
                            std::to_string(problem.n_nets) + " network(s), got " + std::to_string(nets.size()));
  }
  std::vector<NetworkEvaluator> evals;
  std::vector<Eigen::Index> offset;
  Eigen::Index P = 0;
  for (const auto& net : nets) {
    if (input_dim(net) != problem.dim) throw DimensionMismatch("assemble: network input dimension mismatch");
    evals.emplace_back(net);
    offset.push_back(P);
    P += parameter_count(net);
  }
  ResidualSystem sys;
  assemble_set(problem, problem.interior, evals, offset, P, with_jacobian, sys.r_g, sys.J_g);
  assemble_set(problem, problem.boundary, evals, offset, P, with_jacobian, sys.r_b, sys.J_b);
  return sys;
}

Eigen::MatrixXd predict(std::span<const Network> nets, const Eigen::MatrixXd& points) {
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(nets.size()));
  std::vector<double> pt(static_cast<std::size_t>(points.cols()));
  for (std::size_t m = 0; m < nets.size(); ++m) {
    if (input_dim(nets[m]) != points.cols()) throw DimensionMismatch("predict: network input dimension mismatch");
    NetworkEvaluator eval(nets[m]);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      for (Eigen::Index k = 0; k < points.cols(); ++k) pt[k] = points(i, k);
      out(i, static_cast<Eigen::Index>(m)) = eval.forward(pt);
    }
  }
  return out;
}

Eigen::MatrixXd metric_grid(const Problem& problem) {
  std::vector<int> count;
  for (int r : problem.spec.resolution) count.push_back(problem.dim == 1 ? 10 * r : 2 * r);
  return tensor_grid(problem.lower, problem.upper, count);
}

}  // namespace pirbn
