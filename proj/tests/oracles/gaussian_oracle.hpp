#pragma once

// Cell-by-cell mass of a 2-D Gaussian, integrating the density with a
// composite Simpson rule over each square.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace oracle {

inline double gaussian_pdf(const Eigen::Vector2d& x, const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov) {
  const Eigen::Vector2d d = x - mean;
  const double det = cov.determinant();
  return std::exp(-0.5 * d.dot(cov.inverse() * d)) / (2.0 * std::numbers::pi * std::sqrt(det));
}

/// Mass of N(mean, cov) over [x0, x0+res] x [y0, y0+res]; `n` even.
inline double cell_mass(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, double x0, double y0, double res,
                        int n = 64) {
  const double h = res / n;
  auto weight = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double sum = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      sum += weight(i) * weight(j) * gaussian_pdf({x0 + i * h, y0 + j * h}, mean, cov);
  return sum * h * h / 9.0;
}

}  // namespace oracle
