#include "pirbn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pirbn/error.hpp"

namespace pirbn {

namespace {

constexpr double pi = std::numbers::pi;

// Factor of the separable diffusion solution and its derivatives.
double diff_p(double s) { return 2.0 * std::cos(pi * s + pi / 5.0) + 1.5 * std::cos(2.0 * pi * s - 3.0 * pi / 5.0); }
double diff_dp(double s) {
  return -2.0 * pi * std::sin(pi * s + pi / 5.0) - 3.0 * pi * std::sin(2.0 * pi * s - 3.0 * pi / 5.0);
}
double diff_d2p(double s) {
  return -2.0 * pi * pi * std::cos(pi * s + pi / 5.0) - 6.0 * pi * pi * std::cos(2.0 * pi * s - 3.0 * pi / 5.0);
}

}  // namespace

UcmValue ucm_series(const UcmConstants& c, double y, double t) {
  if (c.n_terms < 1) throw InvalidInput("ucm_series: n_terms must be >= 1");
  if (!std::isfinite(y) || !std::isfinite(t)) throw InvalidInput("ucm_series: non-finite point");
  const double E = c.elasticity();
  const double s = t / (2.0 * c.lambda);
  const double decay = std::exp(-s);
  const double Y = y + c.h;

  double u = -c.f / (2.0 * c.eta0) * (c.h * c.h - y * y);
  double tau = c.f * y;
  double last = 0.0;
  for (int i = 1; i <= c.n_terms; ++i) {
    const double N = (2.0 * i - 1.0) * pi;
    const double k = N / (2.0 * c.h);
    const double a0 = 16.0 * c.f * c.h * c.h / (c.eta0 * N * N * N);
    const double disc = E * N * N - 1.0;
    const double gamma = 1.0 - 0.5 * E * N * N;
    double G = 0.0;
    double Gs = 0.0;  // dG/ds
    if (disc > 0.0) {
      const double w = std::sqrt(disc);
      G = std::cos(w * s) + gamma / w * std::sin(w * s);
      Gs = -w * std::sin(w * s) + gamma * std::cos(w * s);
    } else if (disc < 0.0) {
      const double w = std::sqrt(-disc);
      G = std::cosh(w * s) + gamma / w * std::sinh(w * s);
      Gs = w * std::sinh(w * s) + gamma * std::cosh(w * s);
    } else {
      G = 1.0 + gamma * s;
      Gs = gamma;
    }
    const double ui = a0 * decay * G * std::sin(k * Y);
    const double taui = -c.rho / k * a0 / (2.0 * c.lambda) * decay * (Gs - G) * std::cos(k * Y);
    u += ui;
    tau += taui;
    last = std::max(std::abs(ui), std::abs(taui));
  }
  const double scale = c.u_max();
  return {u / scale, tau / scale, last / scale};
}

std::vector<double> exact_solution(const ProblemSpec& spec, std::span<const double> x) {
  switch (spec.kind) {
    case ProblemKind::Poisson1D:
      return {std::sin(2.0 * spec.mu * pi * (x[0] - spec.shift))};
    case ProblemKind::MixedFreq1D: {
      const double A = (22.0 - x[0]) / 2.0;
      const double B = (x[0] - 20.0) / 2.0;
      return {A * A * std::sin(2.0 * pi * x[0]) + B * B * std::sin(16.0 * pi * x[0])};
    }
    case ProblemKind::Spring1D:
      return {x[0] * std::sin(x[0])};
    case ProblemKind::Wave2D:
      return {std::cos(2.0 * pi * x[0]) * std::sin(pi * x[1]) +
              0.5 * std::cos(8.0 * pi * x[0]) * std::sin(4.0 * pi * x[1])};
    case ProblemKind::Diffusion2D:
      return {diff_p(x[0]) * diff_p(x[1])};
    case ProblemKind::UcmPoiseuille: {
      const UcmConstants c;
      const UcmValue v = ucm_series(c, x[0], x[1]);
      return {c.u_max() * v.U, c.u_max() * v.T};
    }
  }
  throw UnsupportedKind("exact_solution: unknown problem");
}

std::vector<double> forcing(const ProblemSpec& spec, std::span<const double> x) {
  switch (spec.kind) {
    case ProblemKind::Poisson1D: {
      const double w = 2.0 * spec.mu * pi;
      return {-w * w * std::sin(w * (x[0] - spec.shift))};
    }
    case ProblemKind::MixedFreq1D: {
      const double A = (22.0 - x[0]) / 2.0;
      const double B = (x[0] - 20.0) / 2.0;
      const double k1 = 2.0 * pi;
      const double k2 = 16.0 * pi;
      return {(0.5 - k1 * k1 * A * A) * std::sin(k1 * x[0]) - 2.0 * k1 * A * std::cos(k1 * x[0]) +
              (0.5 - k2 * k2 * B * B) * std::sin(k2 * x[0]) + 2.0 * k2 * B * std::cos(k2 * x[0])};
    }
    case ProblemKind::Spring1D:
      return {2.0 * std::cos(x[0]) + 3.0 * x[0] * std::sin(x[0]) + std::sin(x[0] * std::sin(x[0]))};
    case ProblemKind::Wave2D:
      return {0.0};
    case ProblemKind::Diffusion2D:
      return {diff_p(x[0]) * diff_dp(x[1]) - 0.01 * diff_d2p(x[0]) * diff_p(x[1])};
    case ProblemKind::UcmPoiseuille: {
      const UcmConstants c;
      return {-c.f, 0.0};
    }
  }
  throw UnsupportedKind("forcing: unknown problem");
}

namespace {

// Central-difference evaluation of one term on the exact solution.
double fd_term(const ProblemSpec& spec, const Term& t, std::vector<double> x, double h) {
  auto field = [&](const std::vector<double>& p) { return exact_solution(spec, p)[t.net]; };
  if (t.quantity == Quantity::Value) return field(x);
  const double x0 = x[t.axis];
  x[t.axis] = x0 + h;
  const double fp = field(x);
  x[t.axis] = x0 - h;
  const double fm = field(x);
  if (t.quantity == Quantity::FirstDerivative) return (fp - fm) / (2.0 * h);
  x[t.axis] = x0;
  return (fp - 2.0 * field(x) + fm) / (h * h);
}

}  // namespace

SelfCheckReport oracle_selfcheck(const ProblemSpec& spec, int n_points, std::uint64_t seed) {
  const Problem problem = build_problem(spec);
  const bool ucm = spec.kind == ProblemKind::UcmPoiseuille;
  const double h = ucm ? 1e-5 : 1e-4;

  SelfCheckReport rep;
  rep.problem = std::string(to_string(spec.kind));
  rep.tolerance = ucm ? 1e-3 : 1e-4;

  std::vector<int> interior_ops;
  for (int op : problem.interior.op) {
    if (std::find(interior_ops.begin(), interior_ops.end(), op) == interior_ops.end()) interior_ops.push_back(op);
  }

  double worst = -1.0;
  auto check = [&](const Operator& op, const std::vector<double>& x, double target) {
    double value = -target;
    double scale = std::abs(target);
    for (const Term& t : op.terms) {
      const double v = t.coeff * fd_term(spec, t, x, h);
      value += v;
      scale += std::abs(v);
    }
    if (op.add_sin_u) {
      const double s = std::sin(exact_solution(spec, x)[0]);
      value += s;
      scale += std::abs(s);
    }
    rep.scale = std::max(rep.scale, scale);
    ++rep.points_checked;
    if (std::abs(value) > worst) {
      worst = std::abs(value);
      rep.max_residual = worst;
      rep.worst_operator = op.name;
      rep.worst_point = x;
    }
  };

  std::mt19937_64 gen(seed);
  std::vector<double> x(static_cast<std::size_t>(problem.dim));
  for (int i = 0; i < n_points; ++i) {
    for (int k = 0; k < problem.dim; ++k) {
      // keep the stencil inside the closed domain
      std::uniform_real_distribution<double> u(problem.lower[k] + 2.0 * h, problem.upper[k] - 2.0 * h);
      x[k] = u(gen);
    }
    const std::vector<double> g = forcing(spec, x);
    for (std::size_t j = 0; j < interior_ops.size(); ++j) {
      check(problem.operators[static_cast<std::size_t>(interior_ops[j])], x, g[j]);
    }
  }
  for (Eigen::Index i = 0; i < problem.boundary.size(); ++i) {
    for (int k = 0; k < problem.dim; ++k) x[k] = problem.boundary.points(i, k);
    check(problem.operators[static_cast<std::size_t>(problem.boundary.op[i])], x, problem.boundary.targets[i]);
  }
  rep.pass = rep.max_residual <= rep.tolerance * rep.scale;
  return rep;
}

}  // namespace pirbn
