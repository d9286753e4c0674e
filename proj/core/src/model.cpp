#include "pirbn/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "pirbn/error.hpp"

namespace pirbn {

int CenterGrid::size() const {
  int n = 1;
  for (int c : count) n *= c;
  return n;
}

Eigen::MatrixXd CenterGrid::points() const {
  const int d = dim();
  if (d == 0 || static_cast<int>(lower.size()) != d || static_cast<int>(upper.size()) != d) {
    throw InvalidInput("CenterGrid: lower/upper/count must have the same nonzero length");
  }
  for (int c : count) {
    if (c < 1) throw InvalidInput("CenterGrid: every axis needs at least one centre");
  }
  const int n = size();
  Eigen::MatrixXd pts(n, d);
  for (int row = 0; row < n; ++row) {
    int rem = row;
    for (int k = d - 1; k >= 0; --k) {
      const int i = rem % count[k];
      rem /= count[k];
      pts(row, k) = count[k] == 1 ? 0.5 * (lower[k] + upper[k])
                                  : lower[k] + (upper[k] - lower[k]) * i / (count[k] - 1);
    }
  }
  return pts;
}

// --- Pirbn -----------------------------------------------------------------

Pirbn::Pirbn(RbfKind kind, Eigen::MatrixXd centers, Eigen::VectorXd a, Eigen::VectorXd b)
    : kind_(kind), centers_(std::move(centers)), a_(std::move(a)), b_(std::move(b)) {
  if (centers_.rows() == 0 || centers_.cols() == 0) throw InvalidInput("Pirbn: empty centre matrix");
  if (a_.size() != centers_.rows() || b_.size() != centers_.rows()) {
    throw DimensionMismatch("Pirbn: a, b and centres must have the same length");
  }
  scale_ = 1.0 / std::sqrt(static_cast<double>(centers_.rows()));
}

Eigen::VectorXd Pirbn::parameters() const {
  Eigen::VectorXd theta(parameter_count());
  theta << a_, b_;
  return theta;
}

void Pirbn::set_parameters(std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != parameter_count()) {
    throw DimensionMismatch("Pirbn::set_parameters: wrong parameter count");
  }
  const int d = width();
  for (int i = 0; i < d; ++i) {
    a_[i] = theta[i];
    b_[i] = theta[d + i];
  }
}

void Pirbn::set_support_cutoff(double cutoff) {
  if (!(cutoff > 0.0)) throw InvalidInput("Pirbn: support cutoff must be positive");
  cutoff_ = cutoff;
}

NetworkDerivs pirbn_derivs_subset(const Pirbn& net, std::span<const double> x,
                                  std::span<const Eigen::Index> neurons) {
  const int dim = net.dim();
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("pirbn_derivs: point dimension mismatch");
  const auto& c = net.centers();
  const auto& a = net.a();
  const auto& b = net.b();
  const bool truncate = net.kind() == RbfKind::Gaussian && std::isfinite(net.support_cutoff());
  const double cutoff = net.support_cutoff();

  std::vector<Eigen::Index> live;
  std::vector<double> sq;
  live.reserve(neurons.size());
  sq.reserve(neurons.size());
  for (Eigen::Index i : neurons) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double dk = x[k] - c(i, k);
      s += dk * dk;
    }
    if (truncate && b[i] * b[i] * s > cutoff) continue;
    live.push_back(i);
    sq.push_back(s);
  }

  const Eigen::Index m = static_cast<Eigen::Index>(live.size());
  const Eigen::Index width = net.width();
  const double scale = net.output_scale();
  NetworkDerivs out;
  out.du = Eigen::VectorXd::Zero(dim);
  out.d2u = Eigen::VectorXd::Zero(dim);
  out.jacobian.resize(1 + 2 * dim, 2 * m);
  out.index.resize(static_cast<std::size_t>(2 * m));

  for (Eigen::Index p = 0; p < m; ++p) {
    const Eigen::Index i = live[p];
    out.index[p] = i;
    out.index[m + p] = width + i;
    const double s = sq[p];
    const double bi = b[i];
    const double ai = a[i];
    const RadialProfile f = radial_profile(net.kind(), bi * bi * s);
    const double phi_s = bi * bi * f.df;
    const double s_phi_ss = bi * bi * f.w_d2f;
    const double phi_b = 2.0 * bi * s * f.df;
    const double phi_sb = 2.0 * bi * (f.df + f.w_d2f);
    const double s_phi_ssb = 2.0 * bi * (2.0 * f.w_d2f + f.w2_d3f);

    out.u += scale * ai * f.f;
    out.jacobian(0, p) = scale * f.f;
    out.jacobian(0, m + p) = scale * ai * phi_b;
    for (int k = 0; k < dim; ++k) {
      const double dk = x[k] - c(i, k);
      const double t = s > 0.0 ? dk * dk / s : 0.0;
      const double g1 = 2.0 * dk * phi_s;
      const double g2 = 4.0 * t * s_phi_ss + 2.0 * phi_s;
      const double g1b = 2.0 * dk * phi_sb;
      const double g2b = 4.0 * t * s_phi_ssb + 2.0 * phi_sb;
      out.du[k] += scale * ai * g1;
      out.d2u[k] += scale * ai * g2;
      out.jacobian(1 + k, p) = scale * g1;
      out.jacobian(1 + k, m + p) = scale * ai * g1b;
      out.jacobian(1 + dim + k, p) = scale * g2;
      out.jacobian(1 + dim + k, m + p) = scale * ai * g2b;
    }
  }
  return out;
}

NetworkDerivs pirbn_derivs(const Pirbn& net, std::span<const double> x) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(net.width()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
  return pirbn_derivs_subset(net, x, all);
}

double pirbn_forward(const Pirbn& net, std::span<const double> x) {
  const int dim = net.dim();
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("pirbn_forward: point dimension mismatch");
  const auto& c = net.centers();
  const bool truncate = net.kind() == RbfKind::Gaussian && std::isfinite(net.support_cutoff());
  double y = 0.0;
  for (int i = 0; i < net.width(); ++i) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double dk = x[k] - c(i, k);
      s += dk * dk;
    }
    const double w = net.b()[i] * net.b()[i] * s;
    if (truncate && w > net.support_cutoff()) continue;
    y += net.a()[i] * radial_profile(net.kind(), w).f;
  }
  return net.output_scale() * y;
}

// --- Fnn -------------------------------------------------------------------

Fnn::Fnn(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 3) throw InvalidInput("Fnn: need input, at least one hidden layer and output widths");
  if (widths_.back() != 1) throw InvalidInput("Fnn: output width must be 1");
  for (int w : widths_) {
    if (w < 1) throw InvalidInput("Fnn: widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]), Eigen::VectorXd::Zero(widths_[l + 1])});
    param_count_ += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
}

Eigen::VectorXd Fnn::parameters() const {
  Eigen::VectorXd theta(param_count_);
  Eigen::Index off = 0;
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index col = 0; col < layer.weight.cols(); ++col) theta[off++] = layer.weight(r, col);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) theta[off++] = layer.bias[r];
  }
  return theta;
}

void Fnn::set_parameters(std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != param_count_) throw DimensionMismatch("Fnn::set_parameters: wrong parameter count");
  std::size_t off = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index col = 0; col < layer.weight.cols(); ++col) layer.weight(r, col) = theta[off++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = theta[off++];
  }
}

double fnn_forward(const Fnn& net, std::span<const double> x) {
  if (static_cast<int>(x.size()) != net.dim()) throw DimensionMismatch("fnn_forward: point dimension mismatch");
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const auto& layers = net.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    h = (layers[l].weight * h + layers[l].bias).array().tanh().matrix();
  }
  return (layers.back().weight * h)(0) + layers.back().bias(0);
}

namespace {

// Per hidden layer forward state shared by all directions.
struct LayerState {
  Eigen::ArrayXd s1, s2, s3;  // tanh', tanh'', tanh''' at the pre-activation
};

// Tangents along one input axis.
struct DirectionState {
  std::vector<Eigen::VectorXd> hp;   // dh/dx_k per layer input (index 0 = network input)
  std::vector<Eigen::VectorXd> hpp;  // d2h/dx_k^2
  std::vector<Eigen::ArrayXd> ap;    // pre-activation tangents
  std::vector<Eigen::ArrayXd> app;
};

// Gradient of cu*u + c1*u'_k + c2*u''_k with respect to all parameters.
void reverse_pass(const Fnn& net, const std::vector<Eigen::VectorXd>& hs,
                  const std::vector<LayerState>& st, const DirectionState* dir, double cu,
                  double c1, double c2, Eigen::Ref<Eigen::VectorXd> grad) {
  const auto& layers = net.layers();
  const std::size_t hidden = layers.size() - 1;

  std::vector<Eigen::Index> offset(layers.size());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offset[l] = off;
    off += layers[l].weight.size() + layers[l].bias.size();
  }

  auto write_layer = [&](std::size_t l, const Eigen::VectorXd& abar, const Eigen::VectorXd* apbar,
                         const Eigen::VectorXd* appbar) {
    const auto& W = layers[l].weight;
    Eigen::Index o = offset[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index col = 0; col < W.cols(); ++col) {
        double g = abar[r] * hs[l][col];
        if (dir && apbar) g += (*apbar)[r] * dir->hp[l][col] + (*appbar)[r] * dir->hpp[l][col];
        grad[o++] = g;
      }
    }
    for (Eigen::Index r = 0; r < W.rows(); ++r) grad[o++] = abar[r];
  };

  const auto& Wo = layers.back().weight;
  Eigen::VectorXd obar = Eigen::VectorXd::Constant(1, cu);
  Eigen::VectorXd opbar = Eigen::VectorXd::Constant(1, c1);
  Eigen::VectorXd oppbar = Eigen::VectorXd::Constant(1, c2);
  write_layer(hidden, obar, dir ? &opbar : nullptr, dir ? &oppbar : nullptr);

  Eigen::VectorXd hbar = cu * Wo.row(0).transpose();
  Eigen::VectorXd hpbar = c1 * Wo.row(0).transpose();
  Eigen::VectorXd hppbar = c2 * Wo.row(0).transpose();

  for (std::size_t l = hidden; l-- > 0;) {
    const LayerState& s = st[l];
    Eigen::VectorXd abar, apbar, appbar;
    if (dir) {
      const Eigen::ArrayXd& ap = dir->ap[l];
      const Eigen::ArrayXd& app = dir->app[l];
      abar = (hbar.array() * s.s1 + hpbar.array() * s.s2 * ap +
              hppbar.array() * (s.s3 * ap.square() + s.s2 * app))
                 .matrix();
      apbar = (hpbar.array() * s.s1 + hppbar.array() * 2.0 * s.s2 * ap).matrix();
      appbar = (hppbar.array() * s.s1).matrix();
    } else {
      abar = (hbar.array() * s.s1).matrix();
    }
    write_layer(l, abar, dir ? &apbar : nullptr, dir ? &appbar : nullptr);
    if (l > 0) {
      const auto& W = layers[l].weight;
      hbar = W.transpose() * abar;
      if (dir) {
        hpbar = W.transpose() * apbar;
        hppbar = W.transpose() * appbar;
      }
    }
  }
}

}  // namespace

NetworkDerivs fnn_forward_derivs(const Fnn& net, std::span<const double> x) {
  const int dim = net.dim();
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("fnn_forward_derivs: point dimension mismatch");
  const auto& layers = net.layers();
  const std::size_t hidden = layers.size() - 1;

  std::vector<Eigen::VectorXd> hs(hidden + 1);
  std::vector<LayerState> st(hidden);
  hs[0] = Eigen::Map<const Eigen::VectorXd>(x.data(), dim);
  for (std::size_t l = 0; l < hidden; ++l) {
    const Eigen::ArrayXd a = (layers[l].weight * hs[l] + layers[l].bias).array();
    const Eigen::ArrayXd t = a.tanh();
    st[l].s1 = 1.0 - t.square();
    st[l].s2 = -2.0 * t * st[l].s1;
    st[l].s3 = -2.0 * st[l].s1.square() - 2.0 * t * st[l].s2;
    hs[l + 1] = t.matrix();
  }

  std::vector<DirectionState> dirs(static_cast<std::size_t>(dim));
  for (int k = 0; k < dim; ++k) {
    DirectionState& d = dirs[k];
    d.hp.resize(hidden + 1);
    d.hpp.resize(hidden + 1);
    d.ap.resize(hidden);
    d.app.resize(hidden);
    d.hp[0] = Eigen::VectorXd::Unit(dim, k);
    d.hpp[0] = Eigen::VectorXd::Zero(dim);
    for (std::size_t l = 0; l < hidden; ++l) {
      d.ap[l] = (layers[l].weight * d.hp[l]).array();
      d.app[l] = (layers[l].weight * d.hpp[l]).array();
      d.hp[l + 1] = (st[l].s1 * d.ap[l]).matrix();
      d.hpp[l + 1] = (st[l].s2 * d.ap[l].square() + st[l].s1 * d.app[l]).matrix();
    }
  }

  const auto& Wo = layers.back().weight;
  NetworkDerivs out;
  out.u = (Wo * hs[hidden])(0) + layers.back().bias(0);
  out.du.resize(dim);
  out.d2u.resize(dim);
  for (int k = 0; k < dim; ++k) {
    out.du[k] = (Wo * dirs[k].hp[hidden])(0);
    out.d2u[k] = (Wo * dirs[k].hpp[hidden])(0);
  }

  const Eigen::Index P = net.parameter_count();
  out.index.resize(static_cast<std::size_t>(P));
  for (Eigen::Index i = 0; i < P; ++i) out.index[i] = i;
  out.jacobian.resize(1 + 2 * dim, P);
  Eigen::VectorXd row(P);
  reverse_pass(net, hs, st, nullptr, 1.0, 0.0, 0.0, row);
  out.jacobian.row(0) = row.transpose();
  for (int k = 0; k < dim; ++k) {
    reverse_pass(net, hs, st, &dirs[k], 0.0, 1.0, 0.0, row);
    out.jacobian.row(1 + k) = row.transpose();
    reverse_pass(net, hs, st, &dirs[k], 0.0, 0.0, 1.0, row);
    out.jacobian.row(1 + dim + k) = row.transpose();
  }
  return out;
}

Eigen::VectorXd NetworkDerivs::dense_row(int r, Eigen::Index parameter_count) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(parameter_count);
  for (std::size_t j = 0; j < index.size(); ++j) v[index[j]] = jacobian(r, static_cast<Eigen::Index>(j));
  return v;
}

// --- Initialisation ----------------------------------------------------------

Pirbn init_pirbn(RbfKind kind, const CenterGrid& grid, double b0, std::uint64_t seed,
                 CenterPlacement placement) {
  if (!std::isfinite(b0)) throw InvalidInput("init_pirbn: non-finite b0");
  if (b0 == 0.0) throw DegenerateShape("init_pirbn: b0 = 0");
  Eigen::MatrixXd centers = grid.points();
  if (placement == CenterPlacement::Random) {
    std::mt19937_64 gen(seed ^ 0x9E3779B97F4A7C15ULL);
    for (Eigen::Index i = 0; i < centers.rows(); ++i) {
      for (int k = 0; k < grid.dim(); ++k) {
        std::uniform_real_distribution<double> u(grid.lower[k], grid.upper[k]);
        centers(i, k) = u(gen);
      }
    }
  }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd a(centers.rows());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = normal(gen);
  Pirbn net(kind, std::move(centers), std::move(a), Eigen::VectorXd::Constant(grid.size(), b0));
  if (placement == CenterPlacement::Uniform) net.set_grid(grid);
  return net;
}

Fnn init_fnn(std::vector<int> widths, std::uint64_t seed) {
  Fnn net(std::move(widths));
  std::mt19937_64 gen(seed);
  for (auto& layer : net.layers()) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(layer.weight.cols())));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index col = 0; col < layer.weight.cols(); ++col) layer.weight(r, col) = normal(gen);
    }
    layer.bias.setZero();
  }
  return net;
}

// --- Variant access ------------------------------------------------------------

int input_dim(const Network& net) {
  return std::visit([](const auto& n) { return n.dim(); }, net);
}

int parameter_count(const Network& net) {
  return std::visit([](const auto& n) { return n.parameter_count(); }, net);
}

Eigen::VectorXd parameters(const Network& net) {
  return std::visit([](const auto& n) { return n.parameters(); }, net);
}

void set_parameters(Network& net, std::span<const double> theta) {
  std::visit([&](auto& n) { n.set_parameters(theta); }, net);
}

double forward(const Network& net, std::span<const double> x) {
  if (const auto* p = std::get_if<Pirbn>(&net)) return pirbn_forward(*p, x);
  return fnn_forward(std::get<Fnn>(net), x);
}

NetworkDerivs derivs(const Network& net, std::span<const double> x) {
  if (const auto* p = std::get_if<Pirbn>(&net)) return pirbn_derivs(*p, x);
  return fnn_forward_derivs(std::get<Fnn>(net), x);
}

// --- Evaluator -----------------------------------------------------------------

NetworkEvaluator::NetworkEvaluator(const Network& net) : net_(&net) {
  const auto* p = std::get_if<Pirbn>(&net);
  if (!p || p->kind() != RbfKind::Gaussian || !std::isfinite(p->support_cutoff())) return;
  const int dim = p->dim();
  if (dim > kMaxBucketDim) return;
  const Eigen::Index width = p->width();
  std::vector<double> absb(p->b().data(), p->b().data() + width);
  for (double& v : absb) v = std::abs(v);
  std::nth_element(absb.begin(), absb.begin() + width / 2, absb.end());
  const double bmed = absb[static_cast<std::size_t>(width / 2)];
  if (!(bmed > 0.0)) return;
  const double reach = std::sqrt(p->support_cutoff());
  lo_ = p->centers().colwise().minCoeff().transpose();
  const Eigen::VectorXd hi = p->centers().colwise().maxCoeff().transpose();
  cells_per_axis_.resize(dim);
  double total = 0.0;
  for (cell_ = 0.25 * reach / bmed;; cell_ *= 2.0) {
    total = 1.0;
    for (int k = 0; k < dim; ++k) {
      cells_per_axis_[k] = static_cast<int>(std::floor((hi[k] - lo_[k]) / cell_)) + 1;
      total *= cells_per_axis_[k];
    }
    if (total <= 16.0 * static_cast<double>(width) + 64.0) break;
  }
  buckets_.assign(static_cast<std::size_t>(total), {});
  wide_.clear();
  std::array<int, kMaxBucketDim> lo{}, hi_cell{}, idx{};
  for (Eigen::Index i = 0; i < width; ++i) {
    const double r =
        std::abs(p->b()[i]) > 0.0 ? (1.0 + 1e-9) * reach / std::abs(p->b()[i]) : std::numeric_limits<double>::infinity();
    double span = 1.0;
    for (int k = 0; k < dim; ++k) {
      const double c = p->centers()(i, k);
      lo[k] = static_cast<int>(std::clamp(std::floor((c - r - lo_[k]) / cell_), 0.0, cells_per_axis_[k] - 1.0));
      hi_cell[k] = static_cast<int>(std::clamp(std::floor((c + r - lo_[k]) / cell_), 0.0, cells_per_axis_[k] - 1.0));
      idx[k] = lo[k];
      span *= hi_cell[k] - lo[k] + 1;
    }
    if (span > 0.25 * total) {
      wide_.push_back(i);
      continue;
    }
    while (true) {
      buckets_[linear_cell(idx)].push_back(i);
      int k = dim - 1;
      while (k >= 0 && ++idx[k] > hi_cell[k]) {
        idx[k] = lo[k];
        --k;
      }
      if (k < 0) break;
    }
  }
  bucketed_ = true;
}

std::size_t NetworkEvaluator::linear_cell(std::span<const int> idx) const {
  std::size_t lin = 0;
  for (std::size_t k = 0; k < cells_per_axis_.size(); ++k) {
    lin = lin * static_cast<std::size_t>(cells_per_axis_[k]) + static_cast<std::size_t>(idx[k]);
  }
  return lin;
}

void NetworkEvaluator::neighbours(std::span<const double> x, std::vector<Eigen::Index>& out) const {
  std::array<int, kMaxBucketDim> idx{};
  for (std::size_t k = 0; k < cells_per_axis_.size(); ++k) {
    // points beyond the centre hull clamp to the edge cell, which holds every neuron reaching past it
    idx[k] = static_cast<int>(std::clamp(std::floor((x[k] - lo_[k]) / cell_), 0.0, cells_per_axis_[k] - 1.0));
  }
  const auto& bucket = buckets_[linear_cell(idx)];
  out.resize(wide_.size() + bucket.size());
  std::merge(wide_.begin(), wide_.end(), bucket.begin(), bucket.end(), out.begin());
}

NetworkDerivs NetworkEvaluator::derivs(std::span<const double> x) const {
  if (!bucketed_) return pirbn::derivs(*net_, x);
  const auto& p = std::get<Pirbn>(*net_);
  if (static_cast<int>(x.size()) != p.dim()) throw DimensionMismatch("NetworkEvaluator: point dimension mismatch");
  thread_local std::vector<Eigen::Index> cand;
  neighbours(x, cand);
  return pirbn_derivs_subset(p, x, cand);
}

double NetworkEvaluator::forward(std::span<const double> x) const {
  if (!bucketed_) return pirbn::forward(*net_, x);
  const auto& p = std::get<Pirbn>(*net_);
  if (static_cast<int>(x.size()) != p.dim()) throw DimensionMismatch("NetworkEvaluator: point dimension mismatch");
  thread_local std::vector<Eigen::Index> cand;
  neighbours(x, cand);
  double y = 0.0;
  for (Eigen::Index i : cand) {
    double s = 0.0;
    for (int k = 0; k < p.dim(); ++k) {
      const double dk = x[k] - p.centers()(i, k);
      s += dk * dk;
    }
    const double w = p.b()[i] * p.b()[i] * s;
    if (w > p.support_cutoff()) continue;
    y += p.a()[i] * std::exp(-w);
  }
  return p.output_scale() * y;
}

}  // namespace pirbn
