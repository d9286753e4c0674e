#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pirbn {

/// Radial basis families. Every family is a function of w = b^2 * |x - c|^2.
///
/// Gaussian, InverseQuadratic and InverseMultiquadric are bounded in (0, 1].
/// ThinPlateSpline, w * ln(sqrt(w) + 1), is unbounded and has no local support.
enum class RbfKind { Gaussian, InverseQuadratic, InverseMultiquadric, ThinPlateSpline };

std::string_view to_string(RbfKind kind);
RbfKind rbf_kind_from_string(std::string_view name);

/// Profile F(w) and the scaled derivatives needed for closed-form evaluation.
/// The scaled forms w*F'' and w^2*F''' stay finite at w = 0 for every family.
struct RadialProfile {
  double f;
  double df;        // F'(w)
  double w_d2f;     // w F''(w)
  double w2_d3f;    // w^2 F'''(w)
};

RadialProfile radial_profile(RbfKind kind, double w);

/// Value and derivatives of one neuron G(x) = F(b^2 |x - c|^2).
struct RbfEvalRecord {
  double value = 0.0;
  std::vector<double> d_dx;          // dG/dx_k
  std::vector<double> d2_dx2;        // d2G/dx_k^2
  double d_db = 0.0;                 // dG/db
  std::vector<double> d_db_of_dx;    // d/db dG/dx_k
  std::vector<double> d_db_of_d2x2;  // d/db d2G/dx_k^2
};

double rbf_eval(RbfKind kind, double b, double sq_dist);

RbfEvalRecord rbf_derivs(RbfKind kind, double b, std::span<const double> x,
                         std::span<const double> c);

/// Half-width 3/|b| of the Gaussian impact interval.
double impact_radius(double b);

/// Uniform samples with spacing dx inside the impact interval: 2*floor(3/(|b| dx)) + 1.
int coverage_delta(double b, double dx);

/// Fraction of the Gaussian mass inside the impact interval, erf(3).
/// Independent of b. The commonly quoted figure is 99.8%; the exact value is ~99.9978%.
double impact_mass_fraction();

}  // namespace pirbn
