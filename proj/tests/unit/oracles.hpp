#pragma once

// Independent reference computations used as test oracles. Nothing here
// calls into the library's differentiation or linear-algebra code.

#include "vfalign/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using vfalign::Matrix;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Central difference of a scalar function of several matrices along a
// direction given per matrix.
inline double directional_difference(const std::function<double(const std::vector<Matrix>&)>& fn,
                                     const std::vector<Matrix>& at, const std::vector<Matrix>& dir, double eps) {
  std::vector<Matrix> plus = at, minus = at;
  for (std::size_t k = 0; k < at.size(); ++k) {
    plus[k] += eps * dir[k];
    minus[k] -= eps * dir[k];
  }
  return (fn(plus) - fn(minus)) / (2.0 * eps);
}

inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Singular values by one-sided Jacobi rotations on the columns.
inline std::vector<double> jacobi_singular_values(Matrix a, int sweeps = 60) {
  const Eigen::Index n = a.cols();
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        double alpha = a.col(p).squaredNorm();
        double beta = a.col(q).squaredNorm();
        double gamma = a.col(p).dot(a.col(q));
        if (std::abs(gamma) <= 1e-300) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - sn * aq;
          a(i, q) = sn * ap + c * aq;
        }
      }
    }
    if (off < 1e-15) break;
  }
  std::vector<double> sv;
  for (Eigen::Index j = 0; j < n; ++j) sv.push_back(a.col(j).norm());
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

inline double spectral_norm(const Matrix& w) {
  // Columns of the wider orientation give the same nonzero spectrum.
  return w.rows() >= w.cols() ? jacobi_singular_values(w).front() : jacobi_singular_values(w.transpose()).front();
}

}  // namespace oracle
