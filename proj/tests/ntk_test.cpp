#include "pirbn/ntk.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "pirbn/error.hpp"
#include "support.hpp"

namespace pirbn {
namespace {

SparseRows sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

ResidualSystem system_from(const Eigen::MatrixXd& Jg, const Eigen::MatrixXd& Jb) {
  ResidualSystem s;
  s.J_g = sparse(Jg);
  s.J_b = sparse(Jb);
  s.r_g = Eigen::VectorXd::Zero(Jg.rows());
  s.r_b = Eigen::VectorXd::Zero(Jb.rows());
  return s;
}

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

TEST(ComputeNtk, GramBlocksAreSymmetricPsd) {
  const Eigen::MatrixXd Jg = random_matrix(7, 5, 1), Jb = random_matrix(3, 5, 2);
  const NtkSnapshot s = compute_ntk(system_from(Jg, Jb), 4);
  EXPECT_EQ(s.iteration, 4);
  Eigen::MatrixXd J(10, 5);
  J << Jg, Jb;
  EXPECT_LT((s.K() - J * J.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.K() - s.K().transpose()).cwiseAbs().maxCoeff(), 0.0 + 1e-15);
  const Spectrum sp = spectral(s.K());
  EXPECT_GT(sp.values.minCoeff(), -1e-10);
  EXPECT_NEAR(s.trace_gg(), Jg.squaredNorm(), 1e-10);
}

TEST(ComputeNtk, DuplicatePointIsRankDeficient) {
  Eigen::MatrixXd Jg = random_matrix(4, 6, 3);
  Jg.row(3) = Jg.row(1);
  const NtkSnapshot s = compute_ntk(system_from(Jg, random_matrix(1, 6, 4)));
  EXPECT_EQ(s.K_gg.row(1), s.K_gg.row(3));
  const Spectrum sp = spectral(s.K(), false);
  EXPECT_LT(std::abs(sp.values[sp.values.size() - 1]), 1e-10 * sp.values[0]);
}

TEST(ComputeNtk, SingleNeuronBoundaryEntry) {
  ProblemSpec spec;
  const Problem p = build_problem(spec);
  Eigen::MatrixXd c(1, 1);
  c << 0.0;
  const std::vector<Network> nets{Pirbn(RbfKind::Gaussian, c, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1))};
  const NtkSnapshot s = compute_ntk(assemble(p, nets));
  EXPECT_NEAR(s.K_bb(0, 0), 1.0, 1e-15);
}

TEST(ComputeNtk, MismatchedColumnsThrow) {
  EXPECT_THROW(compute_ntk(system_from(random_matrix(2, 3, 1), random_matrix(2, 4, 1))), DimensionMismatch);
}

TEST(Normalize, IdentityAndRankOne) {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(5, 5);
  EXPECT_EQ(normalize(I), I);
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(6, 0.5, 3.0);
  EXPECT_LT((normalize(v * v.transpose()) - Eigen::MatrixXd::Ones(6, 6)).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::MatrixXd bad = I;
  bad(2, 2) = 0.0;
  EXPECT_THROW(normalize(bad), DegenerateKernel);
  EXPECT_THROW(normalize(Eigen::MatrixXd::Ones(2, 3)), DimensionMismatch);
}

TEST(Normalize, UnitDiagonalBoundedEntries) {
  const Eigen::MatrixXd J = random_matrix(8, 5, 9);
  const Eigen::MatrixXd N = normalize(J * J.transpose());
  EXPECT_LT((N.diagonal().array() - 1.0).abs().maxCoeff(), 1e-14);
  EXPECT_LE(N.cwiseAbs().maxCoeff(), 1.0 + 1e-14);
}

TEST(Spectral, DiagonalKernel) {
  const Eigen::Vector4d d(3.0, 1.0, 7.0, 2.0);
  const Spectrum s = spectral(d.asDiagonal().toDenseMatrix());
  EXPECT_EQ(s.values, Eigen::Vector4d(7.0, 3.0, 2.0, 1.0));
  EXPECT_NEAR(std::abs(s.vectors(2, 0)), 1.0, 1e-15);
}

TEST(Spectral, ReconstructsKernel) {
  const Eigen::MatrixXd J = random_matrix(6, 9, 5);
  const Eigen::MatrixXd K = J * J.transpose();
  const Spectrum s = spectral(K);
  EXPECT_LT((s.vectors * s.values.asDiagonal() * s.vectors.transpose() - K).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 1; i < s.values.size(); ++i) EXPECT_GE(s.values[i - 1], s.values[i]);
}

TEST(PredictedDecay, LimitsInTime) {
  const Eigen::MatrixXd J = random_matrix(4, 6, 8);
  const Spectrum s = spectral(J * J.transpose());
  const Eigen::VectorXd r0 = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  EXPECT_LT((predicted_decay(s, r0, 0.0) - s.vectors.transpose() * r0).norm(), 1e-14);
  EXPECT_LT(predicted_decay(s, r0, 1e6).norm(), 1e-12);
  const Eigen::VectorXd mid = predicted_decay(s, r0, 0.3);
  const Eigen::VectorXd q = s.vectors.transpose() * r0;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(mid[i], std::exp(-s.values[i] * 0.3) * q[i], 1e-14);
}

TEST(Drift, ZeroAndDoubling) {
  const Eigen::MatrixXd J = random_matrix(5, 7, 2);
  const Eigen::MatrixXd K = J * J.transpose();
  EXPECT_EQ(drift(K, K).absolute, 0.0);
  const Drift d = drift(2.0 * K, K);
  const double norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().cwiseAbs().maxCoeff();
  EXPECT_NEAR(d.absolute, norm, 1e-10 * norm);
  EXPECT_NEAR(d.relative, 1.0, 1e-10);
  EXPECT_THROW(drift(K, Eigen::MatrixXd::Identity(3, 3)), DimensionMismatch);
}

TEST(SpectralNorm, PowerIterationMatchesDense) {
  const Eigen::MatrixXd A = random_matrix(40, 40, 12);
  const Eigen::MatrixXd S = A + A.transpose();
  const double dense = spectral_norm(S);
  EXPECT_NEAR(spectral_norm(S, 10), dense, 1e-8 * dense);
}

TEST(DiagDominance, Extremes) {
  EXPECT_EQ(diag_dominance(Eigen::MatrixXd::Identity(6, 6)), 1.0);
  EXPECT_EQ(diag_dominance(Eigen::MatrixXd::Ones(6, 6)), 0.0);
  Eigen::MatrixXd half = Eigen::MatrixXd::Constant(3, 3, -0.5);
  half.diagonal().setOnes();
  EXPECT_NEAR(diag_dominance(half), 0.5, 1e-15);
}

TEST(TheoreticalKernel, OneCentreAtTheCentre) {
  Eigen::MatrixXd c(1, 1);
  c << 0.4;
  const Pirbn net(RbfKind::Gaussian, c, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 2.0));
  const KernelEntries k = theoretical_kernel(net, 0.4, 0.4);
  EXPECT_NEAR(k.K_bb, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(overlap_theta(2.0, 0.4, 0.4, 0.4), 1.0);
  const Pirbn tps(RbfKind::ThinPlateSpline, c, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
  EXPECT_THROW(theoretical_kernel(tps, 0.0, 0.0), UnsupportedKind);
}

// With |a_i| = 1 the population average is exact, so the closed form must equal
// J(x) J(x')^T built from the network Jacobian rows (value and second derivative).
TEST(TheoreticalKernel, MatchesEmpiricalKernelWithUnitAmplitudes) {
  Pirbn net = init_pirbn(RbfKind::Gaussian, {{-1.0}, {1.0}, {21}}, 3.0, 0);
  Eigen::VectorXd theta = net.parameters();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int i = 0; i < 21; ++i) {
    theta[i] = i % 3 ? 1.0 : -1.0;
    theta[21 + i] *= u(rng);
  }
  net.set_parameters(test::view(theta));
  for (auto [x, xp] : {std::pair{0.1, 0.1}, std::pair{-0.3, 0.25}, std::pair{0.7, -0.9}}) {
    const NetworkDerivs d = pirbn_derivs(net, std::vector<double>{x});
    const NetworkDerivs dp = pirbn_derivs(net, std::vector<double>{xp});
    const Eigen::VectorXd u0 = d.dense_row(0, 42), u2 = d.dense_row(2, 42);
    const Eigen::VectorXd v0 = dp.dense_row(0, 42), v2 = dp.dense_row(2, 42);
    const KernelEntries k = theoretical_kernel(net, x, xp);
    EXPECT_NEAR(k.K_bb, u0.dot(v0), 1e-12 * (1.0 + std::abs(k.K_bb)));
    EXPECT_NEAR(k.K_gb, u2.dot(v0), 1e-10 * (1.0 + std::abs(k.K_gb)));
    EXPECT_NEAR(k.K_gg, u2.dot(v2), 1e-10 * (1.0 + std::abs(k.K_gg)));
  }
}

TEST(TheoreticalKernel, MonteCarloOverAmplitudes) {
  const CenterGrid g{{-1.0}, {1.0}, {41}};
  const Pirbn ref = init_pirbn(RbfKind::Gaussian, g, 2.0, 0);
  const double x = 0.05, xp = 0.2;
  const KernelEntries k = theoretical_kernel(ref, x, xp);
  double bb = 0.0, gb = 0.0, gg = 0.0;
  const int n = 3000;
  for (int s = 0; s < n; ++s) {
    const Pirbn net = init_pirbn(RbfKind::Gaussian, g, 2.0, s + 1);
    const NetworkDerivs d = pirbn_derivs(net, std::vector<double>{x});
    const NetworkDerivs dp = pirbn_derivs(net, std::vector<double>{xp});
    bb += d.dense_row(0, 82).dot(dp.dense_row(0, 82));
    gb += d.dense_row(2, 82).dot(dp.dense_row(0, 82));
    gg += d.dense_row(2, 82).dot(dp.dense_row(2, 82));
  }
  EXPECT_NEAR(bb / n, k.K_bb, 0.05 * std::abs(k.K_bb));
  EXPECT_NEAR(gb / n, k.K_gb, 0.05 * std::abs(k.K_gb));
  EXPECT_NEAR(gg / n, k.K_gg, 0.05 * std::abs(k.K_gg));
}

TEST(Analyse, FillsDerivedFields) {
  const Eigen::MatrixXd Jg = random_matrix(5, 8, 1), Jb = random_matrix(2, 8, 2);
  NtkSnapshot s0 = compute_ntk(system_from(Jg, Jb), 0);
  analyse(s0, &s0);
  EXPECT_EQ(s0.eigenvalues.size(), 7);
  EXPECT_EQ(s0.drift_from_init, 0.0);
  NtkSnapshot s1 = compute_ntk(system_from(2.0 * Jg, 2.0 * Jb), 10);
  analyse(s1, &s0);
  EXPECT_NEAR(s1.relative_drift, 3.0, 1e-10);
  EXPECT_NEAR(s1.diag_dominance, s0.diag_dominance, 1e-14);
}

}  // namespace
}  // namespace pirbn
