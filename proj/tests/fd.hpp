#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace pirbn::test {

inline std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Fourth-order central difference.
inline double richardson(const std::function<double(double)>& f, double x, double h) {
  return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1.0) {
  return (a - b).cwiseAbs().maxCoeff() / std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
}

}  // namespace pirbn::test
