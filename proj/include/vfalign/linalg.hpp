#pragma once

#include "vfalign/common.hpp"

namespace vfalign {

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values(i)
  int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix.
SymmetricEigen symmetric_eigen(const Matrix& s, double tol = 1e-15, int max_sweeps = 100);

// Sample covariance of the rows (centered, divided by rows − 1).
Matrix covariance(const Matrix& x);
Matrix cross_covariance(const Matrix& x, const Matrix& y);

}  // namespace vfalign
