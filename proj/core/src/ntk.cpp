#include "pirbn/ntk.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <cmath>

#include "pirbn/error.hpp"

namespace pirbn {

Eigen::MatrixXd NtkSnapshot::K() const {
  const Eigen::Index g = n_g();
  const Eigen::Index b = n_b();
  Eigen::MatrixXd k(g + b, g + b);
  k.topLeftCorner(g, g) = K_gg;
  k.topRightCorner(g, b) = K_gb;
  k.bottomLeftCorner(b, g) = K_gb.transpose();
  k.bottomRightCorner(b, b) = K_bb;
  return k;
}

namespace {

Eigen::MatrixXd gram(const SparseRows& A, const SparseRows& B) {
  const SparseRows bt = B.transpose();
  const SparseRows prod = A * bt;
  return Eigen::MatrixXd(prod);
}

}  // namespace

NtkSnapshot compute_ntk(const ResidualSystem& sys, int iteration) {
  if (sys.J_g.cols() != sys.J_b.cols()) throw DimensionMismatch("compute_ntk: J_g and J_b column counts differ");
  NtkSnapshot s;
  s.iteration = iteration;
  s.K_gg = gram(sys.J_g, sys.J_g);
  s.K_gb = gram(sys.J_g, sys.J_b);
  s.K_bb = gram(sys.J_b, sys.J_b);
  return s;
}

void analyse(NtkSnapshot& snap, const NtkSnapshot* initial) {
  const Eigen::MatrixXd K = snap.K();
  snap.eigenvalues = spectral(K, false).values;
  const Eigen::VectorXd diag = snap.K_gg.diagonal();
  if (diag.allFinite() && (diag.array() > 0.0).all()) {
    snap.normalized_K_g = normalize(snap.K_gg);
    snap.diag_dominance = diag_dominance(snap.normalized_K_g);
  } else {
    snap.normalized_K_g.resize(0, 0);
    snap.diag_dominance = std::numeric_limits<double>::quiet_NaN();
  }
  if (initial) {
    const Drift d = drift(K, initial->K());
    snap.drift_from_init = d.absolute;
    snap.relative_drift = d.relative;
  }
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw DimensionMismatch("normalize: kernel must be square");
  const Eigen::VectorXd diag = K.diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite()) {
    throw DegenerateKernel("normalize: kernel diagonal must be strictly positive");
  }
  const Eigen::VectorXd inv = diag.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd out = inv.asDiagonal() * K * inv.asDiagonal();
  out.diagonal().setOnes();
  return out;
}

Spectrum spectral(const Eigen::MatrixXd& K, bool with_vectors) {
  if (K.rows() != K.cols()) throw DimensionMismatch("spectral: kernel must be square");
  Spectrum s;
  if (K.rows() == 0) return s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, with_vectors ? Eigen::ComputeEigenvectors
                                                                    : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw DegenerateKernel("spectral: eigensolver did not converge");
  s.values = es.eigenvalues().reverse();
  if (with_vectors) s.vectors = es.eigenvectors().rowwise().reverse();
  return s;
}

Eigen::VectorXd predicted_decay(const Spectrum& spectrum, const Eigen::VectorXd& initial_residual, double t) {
  if (spectrum.vectors.rows() != initial_residual.size()) {
    throw DimensionMismatch("predicted_decay: residual length differs from kernel size");
  }
  if (!(t >= 0.0)) throw InvalidInput("predicted_decay: t must be >= 0");
  const Eigen::VectorXd modes = spectrum.vectors.transpose() * initial_residual;
  const Eigen::ArrayXd rates = spectrum.values.array().max(0.0);
  return (modes.array() * (-rates * t).exp()).matrix();
}

double spectral_norm(const Eigen::MatrixXd& S, Eigen::Index dense_limit) {
  if (S.rows() == 0) return 0.0;
  if (S.rows() <= dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  // Power iteration on S^2 converges to the dominant |eigenvalue| regardless of sign.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(S.rows()).normalized();
  double est = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = S * (S * v);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    v = w / n;
    const double next = std::sqrt(n);
    if (std::abs(next - est) <= 1e-12 * next) return next;
    est = next;
  }
  return est;
}

Drift drift(const Eigen::MatrixXd& K_t, const Eigen::MatrixXd& K_0, Eigen::Index dense_limit) {
  if (K_t.rows() != K_0.rows() || K_t.cols() != K_0.cols()) throw DimensionMismatch("drift: kernel shapes differ");
  Drift d;
  d.absolute = spectral_norm(K_t - K_0, dense_limit);
  const double base = spectral_norm(K_0, dense_limit);
  d.relative = base > 0.0 ? d.absolute / base : std::numeric_limits<double>::infinity();
  return d;
}

double diag_dominance(const Eigen::MatrixXd& normalized) {
  const Eigen::Index n = normalized.rows();
  if (n != normalized.cols()) throw DimensionMismatch("diag_dominance: matrix must be square");
  if (n < 2) return 1.0;
  const double off = normalized.cwiseAbs().sum() - normalized.diagonal().cwiseAbs().sum();
  return 1.0 - off / static_cast<double>(n * (n - 1));
}

double overlap_theta(double b, double c, double x, double x_prime) {
  return std::exp(-b * b * ((x - c) * (x - c) + (x_prime - c) * (x_prime - c)));
}

KernelEntries theoretical_kernel(const Pirbn& net, double x, double x_prime) {
  if (net.kind() != RbfKind::Gaussian) throw UnsupportedKind("theoretical_kernel: Gaussian networks only");
  if (net.dim() != 1) throw DimensionMismatch("theoretical_kernel: 1D networks only");
  KernelEntries k;
  const int d = net.width();
  for (int i = 0; i < d; ++i) {
    const double b = net.b()[i];
    const double c = net.centers()(i, 0);
    const double b2 = b * b;
    const double e = (x - c) * (x - c);
    const double ep = (x_prime - c) * (x_prime - c);
    const double theta = overlap_theta(b, c, x, x_prime);
    const double p = 2.0 * b2 * e * e * b2 - 5.0 * b2 * e + 1.0;
    const double pp = 2.0 * b2 * ep * ep * b2 - 5.0 * b2 * ep + 1.0;
    k.K_bb += (1.0 + 4.0 * b2 * e * ep) * theta;
    k.K_gb += (2.0 * b2 * (2.0 * b2 * e - 1.0) + 8.0 * b2 * p * ep) * theta;
    k.K_gg += 4.0 * (b2 * b2 * (2.0 * b2 * e - 1.0) * (2.0 * b2 * ep - 1.0) + 4.0 * b2 * p * pp) * theta;
  }
  k.K_bb /= d;
  k.K_gb /= d;
  k.K_gg /= d;
  return k;
}

}  // namespace pirbn
