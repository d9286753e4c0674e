#include "pirbn/rbf.hpp"

#include <cmath>
#include <string>

#include "pirbn/error.hpp"

namespace pirbn {

std::string_view to_string(RbfKind kind) {
  switch (kind) {
    case RbfKind::Gaussian: return "gaussian";
    case RbfKind::InverseQuadratic: return "inverse_quadratic";
    case RbfKind::InverseMultiquadric: return "inverse_multiquadric";
    case RbfKind::ThinPlateSpline: return "thin_plate_spline";
  }
  return "unknown";
}

RbfKind rbf_kind_from_string(std::string_view name) {
  if (name == "gaussian") return RbfKind::Gaussian;
  if (name == "inverse_quadratic" || name == "iq") return RbfKind::InverseQuadratic;
  if (name == "inverse_multiquadric" || name == "imq") return RbfKind::InverseMultiquadric;
  if (name == "thin_plate_spline" || name == "tps") return RbfKind::ThinPlateSpline;
  throw InvalidInput("unknown rbf kind '" + std::string(name) + "'");
}

RadialProfile radial_profile(RbfKind kind, double w) {
  switch (kind) {
    case RbfKind::Gaussian: {
      const double e = std::exp(-w);
      return {e, -e, w * e, -w * w * e};
    }
    case RbfKind::InverseQuadratic: {
      const double q = 1.0 / (1.0 + w);
      const double q2 = q * q;
      return {q, -q2, 2.0 * w * q2 * q, -6.0 * w * w * q2 * q2};
    }
    case RbfKind::InverseMultiquadric: {
      const double q = 1.0 / (1.0 + w);
      const double s = std::sqrt(q);
      return {s, -0.5 * q * s, 0.75 * w * q * q * s, -1.875 * w * w * q * q * q * s};
    }
    case RbfKind::ThinPlateSpline: {
      const double r = std::sqrt(w);
      const double p = 1.0 + r;
      const double lg = std::log1p(r);
      return {w * lg, lg + r / (2.0 * p), r * (3.0 + 2.0 * r) / (4.0 * p * p),
              -r * (3.0 + 9.0 * r + 4.0 * r * r) / (8.0 * p * p * p)};
    }
  }
  throw UnsupportedKind("radial_profile: unknown kind");
}

double rbf_eval(RbfKind kind, double b, double sq_dist) {
  if (!std::isfinite(b) || !std::isfinite(sq_dist) || sq_dist < 0.0) {
    throw InvalidInput("rbf_eval: shape and squared distance must be finite, distance >= 0");
  }
  return radial_profile(kind, b * b * sq_dist).f;
}

RbfEvalRecord rbf_derivs(RbfKind kind, double b, std::span<const double> x,
                         std::span<const double> c) {
  if (x.size() != c.size()) throw DimensionMismatch("rbf_derivs: point and centre dimension differ");
  if (!std::isfinite(b)) throw InvalidInput("rbf_derivs: non-finite shape parameter");
  const std::size_t dim = x.size();
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(c[k])) throw InvalidInput("rbf_derivs: non-finite coordinate");
    s += (x[k] - c[k]) * (x[k] - c[k]);
  }
  const double b2 = b * b;
  const RadialProfile p = radial_profile(kind, b2 * s);

  // Derivatives with respect to s = |x - c|^2 and b, with s * d2/ds2 kept scaled.
  const double phi_s = b2 * p.df;
  const double s_phi_ss = b2 * p.w_d2f;
  const double phi_b = 2.0 * b * s * p.df;
  const double phi_sb = 2.0 * b * (p.df + p.w_d2f);
  const double s_phi_ssb = 2.0 * b * (2.0 * p.w_d2f + p.w2_d3f);

  RbfEvalRecord rec;
  rec.value = p.f;
  rec.d_db = phi_b;
  rec.d_dx.resize(dim);
  rec.d2_dx2.resize(dim);
  rec.d_db_of_dx.resize(dim);
  rec.d_db_of_d2x2.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double dk = x[k] - c[k];
    const double t = s > 0.0 ? dk * dk / s : 0.0;
    rec.d_dx[k] = 2.0 * dk * phi_s;
    rec.d2_dx2[k] = 4.0 * t * s_phi_ss + 2.0 * phi_s;
    rec.d_db_of_dx[k] = 2.0 * dk * phi_sb;
    rec.d_db_of_d2x2[k] = 4.0 * t * s_phi_ssb + 2.0 * phi_sb;
  }
  return rec;
}

double impact_radius(double b) {
  if (!std::isfinite(b)) throw InvalidInput("impact_radius: non-finite shape parameter");
  if (b == 0.0) throw DegenerateShape("impact_radius: b = 0 has unbounded support");
  return 3.0 / std::abs(b);
}

int coverage_delta(double b, double dx) {
  if (!(dx > 0.0) || !std::isfinite(dx)) throw InvalidInput("coverage_delta: spacing must be positive");
  if (b == 0.0) throw DegenerateShape("coverage_delta: b = 0 has unbounded support");
  const double ratio = 3.0 / (std::abs(b) * dx);
  return 2 * static_cast<int>(std::floor(ratio + 1e-9)) + 1;
}

double impact_mass_fraction() { return std::erf(3.0); }

}  // namespace pirbn
