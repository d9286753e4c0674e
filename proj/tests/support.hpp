#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fd.hpp"
#include "pirbn/model.hpp"
#include "pirbn/problems.hpp"
#include "pirbn/train.hpp"

namespace pirbn::test {

/// The seven problem instances exercised by the Jacobian checks, at a coarse resolution.
inline std::vector<ProblemSpec> coarse_problems() {
  std::vector<ProblemSpec> out;
  auto add = [&](ProblemKind k, std::vector<int> res, double mu = 4.0, double shift = 0.0) {
    ProblemSpec s;
    s.kind = k;
    s.resolution = std::move(res);
    s.mu = mu;
    s.shift = shift;
    out.push_back(s);
  };
  add(ProblemKind::Poisson1D, {6});
  add(ProblemKind::Poisson1D, {6}, 8.0, 100.0);
  add(ProblemKind::MixedFreq1D, {6});
  add(ProblemKind::Spring1D, {6});
  add(ProblemKind::Wave2D, {3, 3});
  add(ProblemKind::Diffusion2D, {3, 3});
  add(ProblemKind::UcmPoiseuille, {3, 3});
  return out;
}

/// Small networks for `problem` whose parameters are drawn at random, so every
/// Jacobian entry is generically nonzero.
inline std::vector<Network> random_networks(const Problem& problem, bool fnn, RbfKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.6, 1.6);
  std::vector<Network> nets;
  for (int k = 0; k < problem.n_nets; ++k) {
    if (fnn) {
      Fnn net = init_fnn(problem.dim == 1 ? std::vector<int>{1, 5, 1} : std::vector<int>{2, 4, 3, 1}, seed + k);
      Eigen::VectorXd theta = net.parameters();
      for (auto& t : theta) t += 0.3 * n(rng);
      // shifted domains need small first-layer weights to keep tanh out of saturation
      if (problem.lower[0] > 50.0) theta.head(5) *= 0.01;
      net.set_parameters(view(theta));
      nets.emplace_back(std::move(net));
    } else {
      CenterGrid g;
      for (int a = 0; a < problem.dim; ++a) {
        const double span = problem.upper[a] - problem.lower[a];
        g.lower.push_back(problem.lower[a] - 0.1 * span);
        g.upper.push_back(problem.upper[a] + 0.1 * span);
        g.count.push_back(problem.dim == 1 ? 6 : 3);
      }
      double b0 = 0.0;
      for (int a = 0; a < problem.dim; ++a) b0 = std::max(b0, 2.0 / (problem.upper[a] - problem.lower[a]));
      Pirbn net = init_pirbn(kind, g, b0, seed + k);
      Eigen::VectorXd theta = net.parameters();
      for (int i = 0; i < net.width(); ++i) theta[net.width() + i] *= (i % 2 ? -1.0 : 1.0) * u(rng);
      net.set_parameters(view(theta));
      nets.emplace_back(std::move(net));
    }
  }
  return nets;
}

struct JacobianCheck {
  double residual_rel_err = 0.0;  // worst column of [J_g; J_b] against differences of r
  double loss_rel_err = 0.0;      // gradient of the weighted loss against differences of L
};

/// Analytic residual Jacobian and loss gradient at the current parameters
/// against fourth-order central differences in every parameter.
inline JacobianCheck check_jacobian(const Problem& problem, const std::vector<Network>& nets, LossWeights w) {
  JacobianCheck out;
  const ResidualSystem sys = assemble(problem, nets);
  const Eigen::MatrixXd J = [&] {
    Eigen::MatrixXd m(sys.J_g.rows() + sys.J_b.rows(), sys.parameter_count());
    m << Eigen::MatrixXd(sys.J_g), Eigen::MatrixXd(sys.J_b);
    return m;
  }();
  const Eigen::VectorXd g = grad(sys, w);
  const Eigen::VectorXd theta = stacked_parameters(nets);
  std::vector<Network> work = nets;
  auto residual = [&](const Eigen::VectorXd& th) {
    set_stacked_parameters(work, th);
    const ResidualSystem s = assemble(problem, work, false);
    Eigen::VectorXd r(s.r_g.size() + s.r_b.size());
    r << s.r_g, s.r_b;
    return r;
  };
  Eigen::MatrixXd fdJ(J.rows(), J.cols());
  Eigen::VectorXd fdg(theta.size());
  const double L0 = loss(sys, w).total;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = 2.5e-4 * std::max(1e-2, std::abs(theta[j]));
    Eigen::VectorXd rp[4];
    const double steps[4] = {h, -h, 2.0 * h, -2.0 * h};
    double Lp[4];
    for (int s = 0; s < 4; ++s) {
      Eigen::VectorXd th = theta;
      th[j] += steps[s];
      rp[s] = residual(th);
      const Eigen::Index ng = sys.r_g.size();
      Lp[s] = 0.5 * w.w_g * rp[s].head(ng).squaredNorm() + 0.5 * w.w_b * rp[s].tail(rp[s].size() - ng).squaredNorm();
    }
    fdJ.col(j) = (8.0 * (rp[0] - rp[1]) - (rp[2] - rp[3])) / (12.0 * h);
    fdg[j] = (8.0 * (Lp[0] - Lp[1]) - (Lp[2] - Lp[3])) / (12.0 * h);
  }
  for (Eigen::Index j = 0; j < J.cols(); ++j) {
    const double scale = std::max(1.0, J.col(j).cwiseAbs().maxCoeff());
    out.residual_rel_err =
        std::max(out.residual_rel_err, (J.col(j) - fdJ.col(j)).cwiseAbs().maxCoeff() / scale);
  }
  out.loss_rel_err = (g - fdg).cwiseAbs().maxCoeff() / std::max({1.0, g.cwiseAbs().maxCoeff(), std::abs(L0)});
  return out;
}

}  // namespace pirbn::test
