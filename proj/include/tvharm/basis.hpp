#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace tvharm {

/// Scaled monomial h_ell(t) = t^ell / ell!.
///
/// Polynomial tracks are expressed in this basis so that the fitted
/// coefficients read directly as derivatives at the window center.
inline double taylor_basis(int ell, double t) {
  if (ell < 0) throw std::invalid_argument("taylor_basis: negative degree");
  double v = 1.0;
  for (int i = 1; i <= ell; ++i) v *= t / static_cast<double>(i);
  return v;
}

/// Window center offset. Half-sample position for even N.
inline double center_offset(int n_samples) {
  return 0.5 * static_cast<double>(n_samples - 1);
}

/// Column vector of h_ell(n - n0) for n = 0..N-1.
inline Eigen::VectorXd basis_column(int ell, int n_samples) {
  if (n_samples < 1) throw std::invalid_argument("basis_column: empty window");
  const double n0 = center_offset(n_samples);
  Eigen::VectorXd h(n_samples);
  for (int n = 0; n < n_samples; ++n) h[n] = taylor_basis(ell, n - n0);
  return h;
}

}  // namespace tvharm
